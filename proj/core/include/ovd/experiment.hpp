#pragma once

#include "ovd/config.hpp"
#include "ovd/dictionary.hpp"
#include "ovd/llm.hpp"
#include "ovd/prompt.hpp"
#include "ovd/world.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace ovd {

struct EvalReport {
    double base_top1 = 0.0;
    double novel_top1 = 0.0;
    double overall_top1 = 0.0;
    std::map<std::string, double> per_category_accuracy;
    std::map<std::string, std::size_t> per_category_samples;
    std::map<std::string, std::size_t> dictionary_sizes;
    std::vector<std::pair<int, double>> loss_curve; // (step, mean batch loss)
};

struct ExperimentResult {
    EvalReport eval;
    DescriptorDictionary dict;
    Checkpoint checkpoint;
    std::vector<UpdateReport> updates;
    std::vector<std::string> base_categories;
    std::vector<std::string> novel_categories;
};

// Full training + evaluation pass over the synthetic world: per-mode
// pipeline, periodic dictionary updates, held-out evaluation over all
// categories. Deterministic in (world.seed, train.seed). When llm_override
// is null the client is built from config.llm.
ExperimentResult run_experiment(const ExperimentConfig& config, LlmClient* llm_override = nullptr);

// Seed phrases run_experiment hands to the dictionary: the first
// ceil(seed_fraction * K) true phrases of each category plus that category's
// deterministic distractor slice.
std::map<std::string, std::vector<std::string>> initial_seed_phrases(const World& world,
                                                                     double seed_fraction);

std::string eval_csv(const EvalReport& report, const ExperimentResult& result);
std::string eval_markdown(const EvalReport& report, const ExperimentResult& result);
std::string loss_csv(const EvalReport& report);
std::string updates_jsonl(const std::vector<UpdateReport>& updates);

} // namespace ovd
