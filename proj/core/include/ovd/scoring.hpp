#pragma once

#include "ovd/dictionary.hpp"
#include "ovd/embedding.hpp"

#include <map>
#include <string>
#include <vector>

namespace ovd {

// How descriptor relevance is computed. Cosine is the default; Softmax
// replaces raw cosines with a softmax over every descriptor of every
// candidate category before selection (ablation mode).
enum class PhiMode { Cosine, Softmax };

// Which category's selected descriptors get their usage bumped during
// recording: the ground-truth one (default) or whatever was predicted.
enum class RecordOn { TrueCategory, Predicted };

// Full scoring trace for one region feature: per-descriptor relevances,
// which descriptors the top-N selector picked, the per-category mean score,
// and the argmax label.
struct ScoreBreakdown {
    std::map<std::string, double> per_category_score;
    std::map<std::string, std::vector<double>> per_descriptor_phi;
    std::map<std::string, std::vector<std::size_t>> selected_indices;
    std::string predicted;
};

// Relevance of one descriptor embedding to a region feature: cosine of the
// unit descriptor against the normalized feature.
double phi(const Embedding& descriptor_embedding, const Embedding& v);

// Mean of the top-n_sel relevances in this category, with the selected
// indices. When the category has fewer than n_sel descriptors the mean runs
// over all of them.
std::pair<double, std::vector<std::size_t>> category_score(const CategoryEntry& entry,
                                                           const Embedding& v,
                                                           std::size_t n_sel);

// Scores every candidate category (all of them, or label_subset when given)
// and predicts the argmax, ties broken by the dictionary's category order.
ScoreBreakdown predict(const DescriptorDictionary& dict, const Embedding& v, std::size_t n_sel,
                       const std::vector<std::string>* label_subset = nullptr,
                       PhiMode mode = PhiMode::Cosine);

// predict over all categories, then record usage on the selected descriptors
// and the (true, predicted) confusion outcome.
ScoreBreakdown score_and_record(DescriptorDictionary& dict, const Embedding& v,
                                const std::string& true_category, std::size_t n_sel,
                                RecordOn record_on = RecordOn::TrueCategory,
                                PhiMode mode = PhiMode::Cosine);

} // namespace ovd
