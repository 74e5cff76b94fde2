#pragma once

#include "ovd/dictionary.hpp"
#include "ovd/scoring.hpp"
#include "ovd/world.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ovd {

// Experiment variants: the full pipeline, a frozen dictionary, a frozen
// (zero) prompt net, or one of the two query templates disabled.
enum class Mode { Full, Static, NoPrompt, NoH, NoC };

Mode mode_from_string(const std::string& s);
const char* to_string(Mode mode);

enum class LlmBackend { Mock, Replay, Http };

LlmBackend backend_from_string(const std::string& s);
const char* to_string(LlmBackend backend);

struct TrainSection {
    int n_iters = 2000;
    std::size_t batch = 32;
    double lr = 0.02;
    double tau = 0.07;
    std::size_t n_sel = 3;
    int n_upd = 250;
    Mode mode = Mode::Full;
    std::uint64_t seed = 1;
    double m = 0.5; // horizontal context margin, fraction of box width
    double n = 0.5; // vertical context margin, fraction of box height
    std::size_t hidden = 0; // 0 = dim/2 (min 2)
    double gamma = 0.85;
    double alpha = 0.5;
    double rho = 0.2;
    std::size_t floor = 3;
    std::size_t k_confusing = 3;
    std::uint64_t min_confusion = 2;
    double seed_fraction = 0.5;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5}; // ablation seeds
    std::size_t eval_samples = 2000;
    bool reset_stats_each_cycle = false;
    RecordOn record_on = RecordOn::TrueCategory;
    PhiMode phi = PhiMode::Cosine;
    bool stats_from_raw = false;          // record statistics from r instead of v
    MergeScope merge_scope = MergeScope::Category;
};

struct LlmSection {
    LlmBackend backend = LlmBackend::Mock;
    std::string url;
    std::string model;
    std::string api_key_env;
    double timeout_s = 30.0;
    std::size_t template_h_top = 5;
    std::size_t max_new_per_query = 10;
    std::string transcript_path; // replay source; with http, recording sink
};

struct IoSection {
    std::string out_dir = "out";
    std::string dict_path;       // defaults to <out_dir>/dict.json
    std::string checkpoint_path; // defaults to <out_dir>/meta.json
};

struct ExperimentConfig {
    WorldSpec world;
    TrainSection train;
    LlmSection llm;
    IoSection io;

    std::string dict_path() const;
    std::string checkpoint_path() const;
};

// Strict parse: unknown sections or keys raise ConfigError naming the key.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text);
std::string dump_config(const ExperimentConfig& config);
void save_config(const ExperimentConfig& config, const std::string& path);

} // namespace ovd
