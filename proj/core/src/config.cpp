#include "ovd/config.hpp"

#include "ovd/errors.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>

using json = nlohmann::ordered_json;

namespace ovd {

Mode mode_from_string(const std::string& s) {
    if (s == "full") return Mode::Full;
    if (s == "static") return Mode::Static;
    if (s == "noprompt") return Mode::NoPrompt;
    if (s == "noH") return Mode::NoH;
    if (s == "noC") return Mode::NoC;
    throw ConfigError("train.mode: unknown mode \"" + s +
                      "\" (expected full|static|noprompt|noH|noC)");
}

const char* to_string(Mode mode) {
    switch (mode) {
        case Mode::Full: return "full";
        case Mode::Static: return "static";
        case Mode::NoPrompt: return "noprompt";
        case Mode::NoH: return "noH";
        case Mode::NoC: return "noC";
    }
    return "full";
}

LlmBackend backend_from_string(const std::string& s) {
    if (s == "mock") return LlmBackend::Mock;
    if (s == "replay") return LlmBackend::Replay;
    if (s == "http") return LlmBackend::Http;
    throw ConfigError("llm.backend: unknown backend \"" + s + "\" (expected mock|replay|http)");
}

const char* to_string(LlmBackend backend) {
    switch (backend) {
        case LlmBackend::Mock: return "mock";
        case LlmBackend::Replay: return "replay";
        case LlmBackend::Http: return "http";
    }
    return "mock";
}

std::string ExperimentConfig::dict_path() const {
    return io.dict_path.empty() ? io.out_dir + "/dict.json" : io.dict_path;
}

std::string ExperimentConfig::checkpoint_path() const {
    return io.checkpoint_path.empty() ? io.out_dir + "/meta.json" : io.checkpoint_path;
}

namespace {

// Pulls a value out of a section while tracking which keys were consumed so
// anything left over can be reported as unknown.
class SectionReader {
public:
    SectionReader(const json& section, std::string name)
        : section_(section), name_(std::move(name)) {}

    template <typename T>
    void get(const char* key, T& out) {
        auto it = section_.find(key);
        if (it == section_.end()) return;
        seen_.insert(key);
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            throw ConfigError(name_ + "." + key + ": wrong type");
        }
    }

    void get_string(const char* key, std::string& out) { get<std::string>(key, out); }

    void finish() const {
        for (const auto& [key, value] : section_.items()) {
            (void)value;
            if (!seen_.count(key)) {
                throw ConfigError("unknown key \"" + name_ + "." + key + "\"");
            }
        }
    }

private:
    const json& section_;
    std::string name_;
    std::set<std::string> seen_;
};

RecordOn record_on_from_string(const std::string& s) {
    if (s == "true_category") return RecordOn::TrueCategory;
    if (s == "predicted") return RecordOn::Predicted;
    throw ConfigError("train.record_on: expected true_category|predicted, got \"" + s + "\"");
}

PhiMode phi_from_string(const std::string& s) {
    if (s == "cosine") return PhiMode::Cosine;
    if (s == "softmax") return PhiMode::Softmax;
    throw ConfigError("train.phi: expected cosine|softmax, got \"" + s + "\"");
}

MergeScope merge_scope_from_string(const std::string& s) {
    if (s == "category") return MergeScope::Category;
    if (s == "global") return MergeScope::Global;
    throw ConfigError("train.merge_scope: expected category|global, got \"" + s + "\"");
}

void validate(const ExperimentConfig& c) {
    if (c.train.n_iters < 0) throw ConfigError("train.n_iters: must be >= 0");
    if (c.train.batch == 0) throw ConfigError("train.batch: must be >= 1");
    if (!(c.train.tau > 0.0)) throw ConfigError("train.tau: must be > 0");
    if (c.train.n_sel == 0) throw ConfigError("train.n_sel: must be >= 1");
    if (c.train.n_upd <= 0) throw ConfigError("train.n_upd: must be >= 1");
    if (!(c.train.gamma > 0.0 && c.train.gamma < 1.0)) {
        throw ConfigError("train.gamma: must be in (0, 1)");
    }
    if (c.train.alpha < 0.0 || c.train.alpha > 1.0) {
        throw ConfigError("train.alpha: must be in [0, 1]");
    }
    if (!(c.train.rho > 0.0 && c.train.rho < 1.0)) throw ConfigError("train.rho: must be in (0, 1)");
    if (c.train.floor == 0) throw ConfigError("train.floor: must be >= 1");
    if (c.train.k_confusing == 0) throw ConfigError("train.k_confusing: must be >= 1");
    if (c.train.seed_fraction < 0.0 || c.train.seed_fraction > 1.0) {
        throw ConfigError("train.seed_fraction: must be in [0, 1]");
    }
    if (c.train.seeds.empty()) throw ConfigError("train.seeds: must not be empty");
    if (c.train.m < 0.0 || c.train.n < 0.0) throw ConfigError("train.m/n: must be >= 0");
    if (c.llm.template_h_top == 0) throw ConfigError("llm.template_h_top: must be >= 1");
    if (c.llm.max_new_per_query == 0) throw ConfigError("llm.max_new_per_query: must be >= 1");
    if (!(c.llm.timeout_s > 0.0)) throw ConfigError("llm.timeout_s: must be > 0");
    if (c.llm.backend == LlmBackend::Http && c.llm.url.empty()) {
        throw ConfigError("llm.url: required for backend=http");
    }
    if (c.llm.backend == LlmBackend::Replay && c.llm.transcript_path.empty()) {
        throw ConfigError("llm.transcript_path: required for backend=replay");
    }
}

} // namespace

ExperimentConfig parse_config(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config: top level must be an object");

    ExperimentConfig c;
    const std::set<std::string> known_sections = {"world", "train", "llm", "io"};
    for (const auto& [key, value] : doc.items()) {
        (void)value;
        if (!known_sections.count(key)) throw ConfigError("unknown key \"" + key + "\"");
        if (!doc[key].is_object()) throw ConfigError("config: \"" + key + "\" must be an object");
    }

    if (doc.contains("world")) {
        SectionReader r(doc["world"], "world");
        r.get("seed", c.world.seed);
        r.get("dim", c.world.dim);
        r.get("n_categories", c.world.n_categories);
        r.get("n_base", c.world.n_base);
        r.get("descriptors_per_category", c.world.descriptors_per_category);
        r.get("shared_parts_per_category", c.world.shared_parts_per_category);
        r.get("presence_prob", c.world.presence_prob);
        r.get("noise_sigma", c.world.noise_sigma);
        r.get("context_gain", c.world.context_gain);
        r.get("n_distractors_per_reply", c.world.n_distractors_per_reply);
        r.get("width", c.world.width);
        r.get("height", c.world.height);
        r.finish();
    }
    if (doc.contains("train")) {
        SectionReader r(doc["train"], "train");
        r.get("n_iters", c.train.n_iters);
        r.get("batch", c.train.batch);
        r.get("lr", c.train.lr);
        r.get("tau", c.train.tau);
        r.get("n_sel", c.train.n_sel);
        r.get("n_upd", c.train.n_upd);
        std::string mode = to_string(c.train.mode);
        r.get_string("mode", mode);
        c.train.mode = mode_from_string(mode);
        r.get("seed", c.train.seed);
        r.get("m", c.train.m);
        r.get("n", c.train.n);
        r.get("hidden", c.train.hidden);
        r.get("gamma", c.train.gamma);
        r.get("alpha", c.train.alpha);
        r.get("rho", c.train.rho);
        r.get("floor", c.train.floor);
        r.get("k_confusing", c.train.k_confusing);
        r.get("min_confusion", c.train.min_confusion);
        r.get("seed_fraction", c.train.seed_fraction);
        r.get("seeds", c.train.seeds);
        r.get("eval_samples", c.train.eval_samples);
        r.get("reset_stats_each_cycle", c.train.reset_stats_each_cycle);
        std::string record_on = "true_category";
        r.get_string("record_on", record_on);
        c.train.record_on = record_on_from_string(record_on);
        std::string phi = "cosine";
        r.get_string("phi", phi);
        c.train.phi = phi_from_string(phi);
        std::string stats_from = c.train.stats_from_raw ? "raw" : "v";
        r.get_string("stats_from", stats_from);
        if (stats_from == "raw") {
            c.train.stats_from_raw = true;
        } else if (stats_from == "v") {
            c.train.stats_from_raw = false;
        } else {
            throw ConfigError("train.stats_from: expected v|raw, got \"" + stats_from + "\"");
        }
        std::string merge_scope = "category";
        r.get_string("merge_scope", merge_scope);
        c.train.merge_scope = merge_scope_from_string(merge_scope);
        r.finish();
    }
    if (doc.contains("llm")) {
        SectionReader r(doc["llm"], "llm");
        std::string backend = to_string(c.llm.backend);
        r.get_string("backend", backend);
        c.llm.backend = backend_from_string(backend);
        r.get_string("url", c.llm.url);
        r.get_string("model", c.llm.model);
        r.get_string("api_key_env", c.llm.api_key_env);
        r.get("timeout_s", c.llm.timeout_s);
        r.get("template_h_top", c.llm.template_h_top);
        r.get("max_new_per_query", c.llm.max_new_per_query);
        r.get_string("transcript_path", c.llm.transcript_path);
        r.finish();
    }
    if (doc.contains("io")) {
        SectionReader r(doc["io"], "io");
        r.get_string("out_dir", c.io.out_dir);
        r.get_string("dict_path", c.io.dict_path);
        r.get_string("checkpoint_path", c.io.checkpoint_path);
        r.finish();
    }

    validate(c);
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open \"" + path + "\"");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config(text);
}

std::string dump_config(const ExperimentConfig& c) {
    json doc;
    doc["world"] = {{"seed", c.world.seed},
                    {"dim", c.world.dim},
                    {"n_categories", c.world.n_categories},
                    {"n_base", c.world.n_base},
                    {"descriptors_per_category", c.world.descriptors_per_category},
                    {"shared_parts_per_category", c.world.shared_parts_per_category},
                    {"presence_prob", c.world.presence_prob},
                    {"noise_sigma", c.world.noise_sigma},
                    {"context_gain", c.world.context_gain},
                    {"n_distractors_per_reply", c.world.n_distractors_per_reply},
                    {"width", c.world.width},
                    {"height", c.world.height}};
    doc["train"] = {{"n_iters", c.train.n_iters},
                    {"batch", c.train.batch},
                    {"lr", c.train.lr},
                    {"tau", c.train.tau},
                    {"n_sel", c.train.n_sel},
                    {"n_upd", c.train.n_upd},
                    {"mode", to_string(c.train.mode)},
                    {"seed", c.train.seed},
                    {"m", c.train.m},
                    {"n", c.train.n},
                    {"hidden", c.train.hidden},
                    {"gamma", c.train.gamma},
                    {"alpha", c.train.alpha},
                    {"rho", c.train.rho},
                    {"floor", c.train.floor},
                    {"k_confusing", c.train.k_confusing},
                    {"min_confusion", c.train.min_confusion},
                    {"seed_fraction", c.train.seed_fraction},
                    {"seeds", c.train.seeds},
                    {"eval_samples", c.train.eval_samples},
                    {"reset_stats_each_cycle", c.train.reset_stats_each_cycle},
                    {"record_on", c.train.record_on == RecordOn::Predicted ? "predicted"
                                                                           : "true_category"},
                    {"phi", c.train.phi == PhiMode::Softmax ? "softmax" : "cosine"},
                    {"stats_from", c.train.stats_from_raw ? "raw" : "v"},
                    {"merge_scope",
                     c.train.merge_scope == MergeScope::Global ? "global" : "category"}};
    doc["llm"] = {{"backend", to_string(c.llm.backend)},
                  {"url", c.llm.url},
                  {"model", c.llm.model},
                  {"api_key_env", c.llm.api_key_env},
                  {"timeout_s", c.llm.timeout_s},
                  {"template_h_top", c.llm.template_h_top},
                  {"max_new_per_query", c.llm.max_new_per_query},
                  {"transcript_path", c.llm.transcript_path}};
    doc["io"] = {{"out_dir", c.io.out_dir},
                 {"dict_path", c.io.dict_path},
                 {"checkpoint_path", c.io.checkpoint_path}};
    return doc.dump(2) + "\n";
}

void save_config(const ExperimentConfig& config, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("save_config: cannot open \"" + path + "\"");
    out << dump_config(config);
    if (!out) throw IoError("save_config: write failed for \"" + path + "\"");
}

} // namespace ovd
