#pragma once

#include "ovd/embedding.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace ovd {

// Maps a phrase to its text embedding. Backed by the synthetic world in
// experiments and by whatever encoder the caller supplies otherwise.
using TextEncoder = std::function<Embedding(const std::string&)>;

// Lowercase, trim, collapse runs of whitespace to single spaces.
std::string normalize_phrase(const std::string& raw);
std::size_t word_count(const std::string& phrase);

// One fine-grained descriptor: a short phrase, its unit text embedding, and
// how often the selector picked it.
struct Descriptor {
    std::string text;
    Embedding embedding; // unit norm
    std::uint64_t usage = 0;
    int created_at_cycle = 0;
};

// A category's descriptor list plus its misclassification statistics.
struct CategoryEntry {
    std::string category;
    std::vector<Descriptor> descriptors;
    std::map<std::string, std::uint64_t> confusion; // predicted label -> count
    std::uint64_t predictions_total = 0;
    std::uint64_t misclassified_total = 0;
};

enum class MergeScope { Category, Global };

struct MergeResult {
    enum class Kind { MergedInto, Inserted };
    Kind kind;
    std::string category; // where the descriptor landed (differs from the
                          // queried category only under MergeScope::Global)
    std::size_t index;
};

// The descriptor dictionary: one entry per category, a momentum merge rule,
// frequency-based pruning, and JSON persistence. Categories keep the order
// they were registered in; every iteration over categories follows it, which
// is what makes runs reproducible.
//
// Concurrency contract: concurrent reads of a snapshot are fine, all
// mutation must be serialized by the caller.
class DescriptorDictionary {
public:
    DescriptorDictionary() = default;

    static DescriptorDictionary init(const std::vector<std::string>& categories,
                                     const std::map<std::string, std::vector<std::string>>& seed_phrases,
                                     const TextEncoder& encode,
                                     double gamma = 0.85,
                                     double alpha = 0.5);

    const std::vector<std::string>& categories() const { return order_; }
    bool has_category(const std::string& category) const;
    const CategoryEntry& entry(const std::string& category) const;
    CategoryEntry& entry(const std::string& category);

    std::size_t dim() const { return dim_; }
    double gamma() const { return gamma_; }
    double alpha() const { return alpha_; }
    int cycle() const { return cycle_; }
    void set_cycle(int cycle) { cycle_ = cycle; }

    // Increments usage of exactly the given descriptor indices.
    void record_usage(const std::string& category, const std::vector<std::size_t>& indices);

    // Bumps predictions_total of the true category; on a miss also bumps
    // confusion[predicted] and misclassified_total.
    void record_confusion(const std::string& true_category, const std::string& predicted_category);

    // Removes descriptors with usage < rho * max_usage_in_category. The
    // `floor` highest-usage descriptors (ties by lower index) are always
    // kept, as are descriptors with created_at_cycle >= min_protected_cycle.
    // Returns the removed phrases in index order.
    std::vector<std::string> prune_low_frequency(
        const std::string& category, double rho, std::size_t floor,
        int min_protected_cycle = std::numeric_limits<int>::max());

    // Momentum merge: finds the most similar existing descriptor j; if the
    // similarity exceeds gamma the stored embedding moves to
    // normalize(alpha * incoming + (1 - alpha) * existing) and the stored
    // text stays. Below gamma the phrase is appended as a new descriptor.
    // An exact-text duplicate always merges regardless of gamma.
    MergeResult merge_descriptor(const std::string& category, const std::string& phrase,
                                 const Embedding& embedding, int cycle,
                                 MergeScope scope = MergeScope::Category);

    // Up to k labels this category gets confused with, by descending count,
    // ties by label; counts below min_count are dropped.
    std::vector<std::string> confusing_categories(const std::string& category, std::size_t k,
                                                  std::uint64_t min_count) const;

    // Zeroes usage and confusion statistics (the reset_stats_each_cycle mode).
    void reset_statistics();

    void save(const std::string& path) const;
    static DescriptorDictionary load(const std::string& path, std::size_t expected_dim);

    bool operator==(const DescriptorDictionary& other) const;

private:
    std::vector<std::string> order_;
    std::map<std::string, CategoryEntry> entries_;
    std::size_t dim_ = 0;
    double gamma_ = 0.85;
    double alpha_ = 0.5;
    int cycle_ = 0;
};

} // namespace ovd
