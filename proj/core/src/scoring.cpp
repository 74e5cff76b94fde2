#include "ovd/scoring.hpp"

#include "ovd/errors.hpp"

#include <algorithm>

namespace ovd {

double phi(const Embedding& descriptor_embedding, const Embedding& v) {
    return cosine(descriptor_embedding, v);
}

std::pair<double, std::vector<std::size_t>> category_score(const CategoryEntry& entry,
                                                           const Embedding& v,
                                                           std::size_t n_sel) {
    if (entry.descriptors.empty()) {
        throw EmptyCategory("category_score: \"" + entry.category + "\" has no descriptors");
    }
    std::vector<double> phis(entry.descriptors.size());
    for (std::size_t i = 0; i < entry.descriptors.size(); ++i) {
        phis[i] = phi(entry.descriptors[i].embedding, v);
    }
    std::vector<std::size_t> selected = top_n_indices(phis, n_sel);
    double sum = 0.0;
    for (std::size_t i : selected) sum += phis[i];
    return {sum / static_cast<double>(selected.size()), std::move(selected)};
}

ScoreBreakdown predict(const DescriptorDictionary& dict, const Embedding& v, std::size_t n_sel,
                       const std::vector<std::string>* label_subset, PhiMode mode) {
    // Candidates in dictionary order, filtered by the subset when given.
    std::vector<std::string> candidates;
    if (label_subset == nullptr) {
        candidates = dict.categories();
    } else {
        for (const auto& label : *label_subset) {
            if (!dict.has_category(label)) {
                throw UnknownCategory("predict: unknown label \"" + label + "\" in subset");
            }
        }
        for (const auto& label : dict.categories()) {
            if (std::find(label_subset->begin(), label_subset->end(), label) !=
                label_subset->end()) {
                candidates.push_back(label);
            }
        }
    }
    if (candidates.empty()) throw EmptyInput("predict: no candidate categories");

    ScoreBreakdown bd;
    // Raw per-descriptor relevances for every candidate.
    for (const auto& label : candidates) {
        const CategoryEntry& e = dict.entry(label);
        if (e.descriptors.empty()) {
            throw EmptyCategory("predict: \"" + label + "\" has no descriptors");
        }
        std::vector<double> phis(e.descriptors.size());
        for (std::size_t i = 0; i < e.descriptors.size(); ++i) {
            phis[i] = phi(e.descriptors[i].embedding, v);
        }
        bd.per_descriptor_phi.emplace(label, std::move(phis));
    }

    if (mode == PhiMode::Softmax) {
        // Joint softmax over every descriptor of every candidate, then the
        // normalized values take the place of the cosines.
        std::vector<double> flat;
        for (const auto& label : candidates) {
            const auto& phis = bd.per_descriptor_phi.at(label);
            flat.insert(flat.end(), phis.begin(), phis.end());
        }
        const std::vector<double> soft = softmax(flat, 1.0);
        std::size_t pos = 0;
        for (const auto& label : candidates) {
            auto& phis = bd.per_descriptor_phi.at(label);
            for (double& x : phis) x = soft[pos++];
        }
    }

    double best_score = 0.0;
    bool have_best = false;
    for (const auto& label : candidates) {
        const auto& phis = bd.per_descriptor_phi.at(label);
        std::vector<std::size_t> selected = top_n_indices(phis, n_sel);
        double sum = 0.0;
        for (std::size_t i : selected) sum += phis[i];
        const double score = sum / static_cast<double>(selected.size());
        bd.per_category_score.emplace(label, score);
        bd.selected_indices.emplace(label, std::move(selected));
        if (!have_best || score > best_score) { // strict > keeps the earliest on ties
            best_score = score;
            bd.predicted = label;
            have_best = true;
        }
    }
    return bd;
}

ScoreBreakdown score_and_record(DescriptorDictionary& dict, const Embedding& v,
                                const std::string& true_category, std::size_t n_sel,
                                RecordOn record_on, PhiMode mode) {
    if (!dict.has_category(true_category)) {
        throw UnknownCategory("score_and_record: unknown true category \"" + true_category + "\"");
    }
    ScoreBreakdown bd = predict(dict, v, n_sel, nullptr, mode);
    const std::string& usage_target =
        (record_on == RecordOn::TrueCategory) ? true_category : bd.predicted;
    dict.record_usage(usage_target, bd.selected_indices.at(usage_target));
    dict.record_confusion(true_category, bd.predicted);
    return bd;
}

} // namespace ovd
