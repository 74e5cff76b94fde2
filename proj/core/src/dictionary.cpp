#include "ovd/dictionary.hpp"

#include "ovd/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <sstream>

using json = nlohmann::ordered_json;

namespace ovd {

std::string normalize_phrase(const std::string& raw) {
    std::string out;
    out.reserve(raw.size());
    bool in_space = true; // leading whitespace is dropped
    for (unsigned char c : raw) {
        if (std::isspace(c)) {
            in_space = true;
            continue;
        }
        if (in_space && !out.empty()) out.push_back(' ');
        in_space = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

std::size_t word_count(const std::string& phrase) {
    std::size_t n = 0;
    bool in_word = false;
    for (unsigned char c : phrase) {
        if (std::isspace(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++n;
        }
    }
    return n;
}

DescriptorDictionary DescriptorDictionary::init(
    const std::vector<std::string>& categories,
    const std::map<std::string, std::vector<std::string>>& seed_phrases,
    const TextEncoder& encode, double gamma, double alpha) {
    DescriptorDictionary dict;
    dict.gamma_ = gamma;
    dict.alpha_ = alpha;
    for (const auto& category : categories) {
        if (dict.entries_.count(category)) continue; // ignore duplicate labels
        CategoryEntry entry;
        entry.category = category;
        auto it = seed_phrases.find(category);
        if (it != seed_phrases.end()) {
            for (const auto& raw : it->second) {
                const std::string phrase = normalize_phrase(raw);
                if (phrase.empty()) continue;
                const bool dup = std::any_of(
                    entry.descriptors.begin(), entry.descriptors.end(),
                    [&](const Descriptor& d) { return d.text == phrase; });
                if (dup) continue;
                Descriptor d;
                d.text = phrase;
                d.embedding = l2_normalize(encode(phrase));
                if (!all_finite(d.embedding)) {
                    throw InvalidSpec("init: non-finite embedding for \"" + phrase + "\"");
                }
                if (dict.dim_ == 0) {
                    dict.dim_ = d.embedding.size();
                } else if (d.embedding.size() != dict.dim_) {
                    throw DimMismatch("init: encoder returned dim " +
                                      std::to_string(d.embedding.size()) + ", expected " +
                                      std::to_string(dict.dim_));
                }
                entry.descriptors.push_back(std::move(d));
            }
        }
        if (entry.descriptors.empty()) {
            throw EmptySeed("init: category \"" + category + "\" has no seed descriptors");
        }
        dict.order_.push_back(category);
        dict.entries_.emplace(category, std::move(entry));
    }
    return dict;
}

bool DescriptorDictionary::has_category(const std::string& category) const {
    return entries_.count(category) != 0;
}

const CategoryEntry& DescriptorDictionary::entry(const std::string& category) const {
    auto it = entries_.find(category);
    if (it == entries_.end()) throw UnknownCategory("unknown category \"" + category + "\"");
    return it->second;
}

CategoryEntry& DescriptorDictionary::entry(const std::string& category) {
    auto it = entries_.find(category);
    if (it == entries_.end()) throw UnknownCategory("unknown category \"" + category + "\"");
    return it->second;
}

void DescriptorDictionary::record_usage(const std::string& category,
                                        const std::vector<std::size_t>& indices) {
    CategoryEntry& e = entry(category);
    for (std::size_t i : indices) {
        if (i >= e.descriptors.size()) {
            throw IndexOutOfRange("record_usage: index " + std::to_string(i) +
                                  " out of range for \"" + category + "\" (K=" +
                                  std::to_string(e.descriptors.size()) + ")");
        }
    }
    for (std::size_t i : indices) e.descriptors[i].usage += 1;
}

void DescriptorDictionary::record_confusion(const std::string& true_category,
                                            const std::string& predicted_category) {
    CategoryEntry& t = entry(true_category);
    if (!has_category(predicted_category)) {
        throw UnknownCategory("record_confusion: unknown predicted \"" + predicted_category + "\"");
    }
    t.predictions_total += 1;
    if (predicted_category != true_category) {
        t.confusion[predicted_category] += 1;
        t.misclassified_total += 1;
    }
}

std::vector<std::string> DescriptorDictionary::prune_low_frequency(
    const std::string& category, double rho, std::size_t floor, int min_protected_cycle) {
    CategoryEntry& e = entry(category);
    const std::size_t k = e.descriptors.size();
    if (k == 0) return {};

    std::uint64_t max_usage = 0;
    for (const auto& d : e.descriptors) max_usage = std::max(max_usage, d.usage);
    const double threshold = rho * static_cast<double>(max_usage);

    // Rank by usage descending, ties by lower index; the top `floor` ranks
    // survive no matter what.
    std::vector<std::size_t> rank(k);
    std::iota(rank.begin(), rank.end(), std::size_t{0});
    std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
        return e.descriptors[a].usage > e.descriptors[b].usage;
    });
    std::vector<bool> floored(k, false);
    for (std::size_t r = 0; r < std::min(floor, k); ++r) floored[rank[r]] = true;

    std::vector<std::string> removed;
    std::vector<Descriptor> kept;
    kept.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        const Descriptor& d = e.descriptors[i];
        const bool protected_by_cycle = d.created_at_cycle >= min_protected_cycle;
        const bool low = static_cast<double>(d.usage) < threshold;
        if (low && !floored[i] && !protected_by_cycle) {
            removed.push_back(d.text);
        } else {
            kept.push_back(d);
        }
    }
    e.descriptors = std::move(kept);
    return removed;
}

MergeResult DescriptorDictionary::merge_descriptor(const std::string& category,
                                                   const std::string& phrase,
                                                   const Embedding& embedding, int cycle,
                                                   MergeScope scope) {
    CategoryEntry& home = entry(category);
    if (embedding.size() != dim_) {
        throw DimMismatch("merge_descriptor: embedding dim " + std::to_string(embedding.size()) +
                          ", dictionary dim " + std::to_string(dim_));
    }
    const Embedding incoming = l2_normalize(embedding);
    const std::string text = normalize_phrase(phrase);
    if (text.empty()) throw EmptyInput("merge_descriptor: empty phrase");

    const auto blend_into = [&](CategoryEntry& e, std::size_t j) -> MergeResult {
        Descriptor& d = e.descriptors[j];
        Embedding blended(dim_);
        for (std::size_t i = 0; i < dim_; ++i) {
            blended[i] = alpha_ * incoming[i] + (1.0 - alpha_) * d.embedding[i];
        }
        d.embedding = l2_normalize(blended);
        return MergeResult{MergeResult::Kind::MergedInto, e.category, j};
    };

    std::vector<CategoryEntry*> scan;
    if (scope == MergeScope::Category) {
        scan.push_back(&home);
    } else {
        for (const auto& label : order_) scan.push_back(&entries_.at(label));
    }

    // Exact-text duplicates merge unconditionally.
    for (CategoryEntry* e : scan) {
        for (std::size_t j = 0; j < e->descriptors.size(); ++j) {
            if (e->descriptors[j].text == text) return blend_into(*e, j);
        }
    }

    CategoryEntry* best_entry = nullptr;
    std::size_t best_index = 0;
    double best_sim = -2.0;
    for (CategoryEntry* e : scan) {
        for (std::size_t j = 0; j < e->descriptors.size(); ++j) {
            const double s = cosine(e->descriptors[j].embedding, incoming);
            if (s > best_sim) {
                best_sim = s;
                best_entry = e;
                best_index = j;
            }
        }
    }
    if (best_entry != nullptr && best_sim > gamma_) return blend_into(*best_entry, best_index);

    Descriptor d;
    d.text = text;
    d.embedding = incoming;
    d.usage = 0;
    d.created_at_cycle = cycle;
    home.descriptors.push_back(std::move(d));
    return MergeResult{MergeResult::Kind::Inserted, category, home.descriptors.size() - 1};
}

std::vector<std::string> DescriptorDictionary::confusing_categories(
    const std::string& category, std::size_t k, std::uint64_t min_count) const {
    const CategoryEntry& e = entry(category);
    std::vector<std::pair<std::string, std::uint64_t>> items;
    for (const auto& [label, count] : e.confusion) {
        if (count >= min_count && count > 0) items.emplace_back(label, count);
    }
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(k, items.size()); ++i) out.push_back(items[i].first);
    return out;
}

void DescriptorDictionary::reset_statistics() {
    for (auto& [label, e] : entries_) {
        (void)label;
        for (auto& d : e.descriptors) d.usage = 0;
        e.confusion.clear();
        e.predictions_total = 0;
        e.misclassified_total = 0;
    }
}

void DescriptorDictionary::save(const std::string& path) const {
    json doc;
    doc["version"] = 1;
    doc["dim"] = dim_;
    doc["gamma"] = gamma_;
    doc["alpha"] = alpha_;
    doc["cycle"] = cycle_;
    doc["categories"] = json::array();
    for (const auto& label : order_) {
        const CategoryEntry& e = entries_.at(label);
        json cat;
        cat["name"] = e.category;
        cat["predictions_total"] = e.predictions_total;
        cat["misclassified_total"] = e.misclassified_total;
        cat["confusion"] = json::object();
        for (const auto& [other, count] : e.confusion) cat["confusion"][other] = count;
        cat["descriptors"] = json::array();
        for (const auto& d : e.descriptors) {
            json jd;
            jd["text"] = d.text;
            jd["usage"] = d.usage;
            jd["cycle"] = d.created_at_cycle;
            jd["embedding"] = d.embedding;
            cat["descriptors"].push_back(std::move(jd));
        }
        doc["categories"].push_back(std::move(cat));
    }
    std::ofstream out(path);
    if (!out) throw IoError("save: cannot open \"" + path + "\" for writing");
    out << doc.dump(2) << "\n";
    if (!out) throw IoError("save: write failed for \"" + path + "\"");
}

DescriptorDictionary DescriptorDictionary::load(const std::string& path,
                                                std::size_t expected_dim) {
    std::ifstream in(path);
    if (!in) throw IoError("load: cannot open \"" + path + "\"");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw FormatError("load: \"" + path + "\": " + e.what());
    }
    try {
        if (doc.at("version").get<int>() != 1) {
            throw FormatError("load: unsupported version in \"" + path + "\"");
        }
        DescriptorDictionary dict;
        dict.dim_ = doc.at("dim").get<std::size_t>();
        if (expected_dim != 0 && dict.dim_ != expected_dim) {
            throw DimMismatch("load: file dim " + std::to_string(dict.dim_) + ", expected " +
                              std::to_string(expected_dim));
        }
        dict.gamma_ = doc.at("gamma").get<double>();
        dict.alpha_ = doc.at("alpha").get<double>();
        dict.cycle_ = doc.at("cycle").get<int>();
        for (const auto& cat : doc.at("categories")) {
            CategoryEntry e;
            e.category = cat.at("name").get<std::string>();
            e.predictions_total = cat.at("predictions_total").get<std::uint64_t>();
            e.misclassified_total = cat.at("misclassified_total").get<std::uint64_t>();
            for (const auto& [other, count] : cat.at("confusion").items()) {
                e.confusion[other] = count.get<std::uint64_t>();
            }
            for (const auto& jd : cat.at("descriptors")) {
                Descriptor d;
                d.text = jd.at("text").get<std::string>();
                d.usage = jd.at("usage").get<std::uint64_t>();
                d.created_at_cycle = jd.at("cycle").get<int>();
                d.embedding = jd.at("embedding").get<Embedding>();
                if (d.embedding.size() != dict.dim_) {
                    throw DimMismatch("load: descriptor \"" + d.text + "\" has dim " +
                                      std::to_string(d.embedding.size()));
                }
                if (!all_finite(d.embedding)) {
                    throw FormatError("load: non-finite embedding for \"" + d.text + "\"");
                }
                e.descriptors.push_back(std::move(d));
            }
            dict.order_.push_back(e.category);
            dict.entries_.emplace(e.category, std::move(e));
        }
        return dict;
    } catch (const json::exception& e) {
        throw FormatError("load: \"" + path + "\": " + e.what());
    }
}

bool DescriptorDictionary::operator==(const DescriptorDictionary& other) const {
    if (order_ != other.order_ || dim_ != other.dim_ || gamma_ != other.gamma_ ||
        alpha_ != other.alpha_ || cycle_ != other.cycle_) {
        return false;
    }
    for (const auto& label : order_) {
        const CategoryEntry& a = entries_.at(label);
        const CategoryEntry& b = other.entries_.at(label);
        if (a.predictions_total != b.predictions_total ||
            a.misclassified_total != b.misclassified_total || a.confusion != b.confusion ||
            a.descriptors.size() != b.descriptors.size()) {
            return false;
        }
        for (std::size_t i = 0; i < a.descriptors.size(); ++i) {
            const Descriptor& da = a.descriptors[i];
            const Descriptor& db = b.descriptors[i];
            if (da.text != db.text || da.usage != db.usage ||
                da.created_at_cycle != db.created_at_cycle || da.embedding != db.embedding) {
                return false;
            }
        }
    }
    return true;
}

} // namespace ovd
