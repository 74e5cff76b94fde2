#pragma once

#include "ovd/embedding.hpp"
#include "ovd/llm.hpp"
#include "ovd/prompt.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ovd {

// Hidden generative model standing in for the image encoder, the text
// encoder, the dataset and the live LLM. Everything it emits is a pure
// function of (spec, seed arguments).
struct WorldSpec {
    std::uint64_t seed = 1;
    std::size_t dim = 16;
    std::size_t n_categories = 48;
    std::size_t n_base = 32;
    std::size_t descriptors_per_category = 6;
    // How many of a category's parts come from the shared pool. Shared parts
    // appear in several categories (chained by index), the way real objects
    // share fine-grained attributes; the rest are unique to the category.
    std::size_t shared_parts_per_category = 0;
    double presence_prob = 0.5;   // chance each part shows up in a sample
    double noise_sigma = 0.35;
    double context_gain = 1.0;    // prototype weight in the context feature
    std::size_t n_distractors_per_reply = 2;
    double width = 640.0;
    double height = 640.0;
};

struct HiddenDescriptor {
    std::string phrase;
    Embedding signature; // unit norm
};

struct SyntheticSample {
    Proposal proposal;
};

class World {
public:
    static World generate(const WorldSpec& spec);

    const WorldSpec& spec() const { return spec_; }
    const std::vector<std::string>& labels() const { return labels_; }
    std::vector<std::string> base_labels() const;
    std::vector<std::string> novel_labels() const;

    const std::vector<HiddenDescriptor>& true_descriptors(const std::string& category) const;
    const Embedding& prototype(const std::string& category) const;
    const std::vector<HiddenDescriptor>& distractor_pool() const { return distractors_; }
    bool is_world_phrase(const std::string& phrase) const;

    // Draws batch_size labeled proposals from the given categories. Each
    // sample keeps a random subset of its category's part signatures
    // (resampled to non-empty), adds gaussian noise, and builds the context
    // feature from the category prototype.
    std::vector<SyntheticSample> sample_batch(const std::vector<std::string>& categories,
                                              std::size_t batch_size, std::uint64_t seed) const;

    // World phrases map to their hidden signatures; anything else maps to a
    // hash-seeded random unit vector, stable across runs.
    Embedding encode_text(const std::string& phrase) const;

    // Scripted replies: H returns the category's true phrases missing from
    // the query payload plus a few distractors; C returns the true phrases
    // that best separate the category from the listed confusers.
    std::string llm_reply(const LLMQuery& query) const;

    // Deterministic per-category slice of the distractor pool, used to
    // stress dictionaries at initialization.
    std::vector<std::string> init_distractors(const std::string& category) const;

private:
    WorldSpec spec_;
    std::vector<std::string> labels_;
    std::vector<std::vector<HiddenDescriptor>> descriptors_; // by category index
    std::vector<Embedding> prototypes_;                      // by category index
    std::vector<HiddenDescriptor> distractors_;

    std::size_t category_index(const std::string& category) const;
};

// LlmClient backed by the world's scripted replies.
class WorldLlmClient : public LlmClient {
public:
    explicit WorldLlmClient(const World& world) : world_(world) {}
    std::string send(const LLMQuery& query) override { return world_.llm_reply(query); }

private:
    const World& world_;
};

} // namespace ovd
