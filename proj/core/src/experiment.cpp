#include "ovd/experiment.hpp"

#include "ovd/errors.hpp"
#include "ovd/rng.hpp"
#include "ovd/scoring.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

using json = nlohmann::ordered_json;

namespace ovd {

namespace {

constexpr std::uint64_t kIterSalt = 0x69746572u; // batch stream per iteration
constexpr std::uint64_t kEvalSalt = 0x6576616cu; // held-out evaluation stream

double loss_from_scores(const std::vector<std::string>& labels,
                        const std::map<std::string, double>& scores,
                        const std::string& true_category, double tau) {
    std::vector<double> s;
    s.reserve(labels.size());
    std::size_t true_idx = 0;
    for (const auto& label : labels) {
        if (label == true_category) true_idx = s.size();
        s.push_back(scores.at(label));
    }
    const std::vector<double> p = softmax(s, tau);
    return -std::log(std::max(p[true_idx], 1e-300));
}

std::unique_ptr<LlmClient> build_client(const ExperimentConfig& config, const World& world) {
    switch (config.llm.backend) {
        case LlmBackend::Mock:
            return std::make_unique<WorldLlmClient>(world);
        case LlmBackend::Replay:
            return std::make_unique<ReplayFileClient>(config.llm.transcript_path);
        case LlmBackend::Http: {
            auto http = std::make_unique<HttpChat>(config.llm.url, config.llm.model,
                                                   config.llm.api_key_env, config.llm.timeout_s);
            if (!config.llm.transcript_path.empty()) {
                return std::make_unique<RecordingClient>(std::move(http),
                                                         config.llm.transcript_path);
            }
            return http;
        }
    }
    throw ConfigError("llm.backend: unhandled backend");
}

std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", x);
    return buf;
}

} // namespace

std::map<std::string, std::vector<std::string>> initial_seed_phrases(const World& world,
                                                                     double seed_fraction) {
    std::map<std::string, std::vector<std::string>> seeds;
    for (const auto& label : world.labels()) {
        const auto& parts = world.true_descriptors(label);
        const std::size_t take = std::min(
            parts.size(),
            std::max<std::size_t>(
                1, static_cast<std::size_t>(
                       std::ceil(seed_fraction * static_cast<double>(parts.size())))));
        std::vector<std::string> phrases;
        for (std::size_t k = 0; k < take; ++k) phrases.push_back(parts[k].phrase);
        for (const auto& noise : world.init_distractors(label)) phrases.push_back(noise);
        seeds.emplace(label, std::move(phrases));
    }
    return seeds;
}

ExperimentResult run_experiment(const ExperimentConfig& config, LlmClient* llm_override) {
    const World world = World::generate(config.world);
    const TextEncoder encode = [&world](const std::string& phrase) {
        return world.encode_text(phrase);
    };

    ExperimentResult result;
    result.base_categories = world.base_labels();
    result.novel_categories = world.novel_labels();

    result.dict = DescriptorDictionary::init(world.labels(),
                                             initial_seed_phrases(world, config.train.seed_fraction),
                                             encode, config.train.gamma, config.train.alpha);
    DescriptorDictionary& dict = result.dict;

    const std::size_t dim = config.world.dim;
    const std::size_t hidden =
        config.train.hidden != 0 ? config.train.hidden : MetaNetParams::default_hidden(dim);
    MetaNetParams theta = MetaNetParams::init(dim, hidden, config.train.seed);

    std::unique_ptr<LlmClient> owned_client;
    LlmClient* llm = llm_override;
    if (llm == nullptr && config.train.mode != Mode::Static) {
        owned_client = build_client(config, world);
        llm = owned_client.get();
    }

    UpdatePolicy policy;
    policy.n_upd = config.train.n_upd;
    policy.rho = config.train.rho;
    policy.floor = config.train.floor;
    policy.k_confusing = config.train.k_confusing;
    policy.min_confusion = config.train.min_confusion;
    policy.template_h_top = config.llm.template_h_top;
    policy.max_new_per_query = config.llm.max_new_per_query;
    policy.enable_h = config.train.mode != Mode::NoH;
    policy.enable_c = config.train.mode != Mode::NoC;
    policy.merge_scope = config.train.merge_scope;

    const Mode mode = config.train.mode;
    const std::vector<std::string> base = world.base_labels();
    int cycle = 0;

    for (int iter = 0; iter < config.train.n_iters; ++iter) {
        const std::uint64_t batch_seed =
            mix_seed(config.train.seed, kIterSalt + static_cast<std::uint64_t>(iter));
        std::vector<SyntheticSample> samples =
            world.sample_batch(base, config.train.batch, batch_seed);

        std::vector<Proposal> batch;
        batch.reserve(samples.size());
        double loss_sum = 0.0;
        for (const SyntheticSample& sample : samples) {
            Proposal prop = sample.proposal;
            const Box enlarged =
                enlarge_box(prop.box, config.train.m * prop.box.width(),
                            config.train.n * prop.box.height(), config.world.width,
                            config.world.height);
            (void)enlarged; // the context feature comes from the world directly

            const Embedding pi = meta_forward(theta, prop.r_ctx);
            const Embedding v = prompted_feature(prop.r, pi);

            const Embedding& stats_feature = config.train.stats_from_raw ? prop.r : v;
            const ScoreBreakdown bd =
                score_and_record(dict, stats_feature, prop.true_category, config.train.n_sel,
                                 config.train.record_on, config.train.phi);
            // The training loss softmaxes over the base vocabulary only;
            // novel categories are never pushed away as negatives.
            if (!config.train.stats_from_raw) {
                loss_sum += loss_from_scores(base, bd.per_category_score, prop.true_category,
                                             config.train.tau);
            } else {
                loss_sum += classification_loss(dict, v, prop.true_category, config.train.n_sel,
                                                config.train.tau, &base);
            }
            batch.push_back(std::move(prop));
        }
        result.eval.loss_curve.emplace_back(iter,
                                            loss_sum / static_cast<double>(samples.size()));

        if (mode != Mode::NoPrompt) {
            const MetaNetParams grads =
                grad_theta(theta, dict, batch, config.train.n_sel, config.train.tau, &base);
            theta = sgd_step(theta, grads, config.train.lr);
        }

        if ((iter + 1) % config.train.n_upd == 0 && mode != Mode::Static) {
            ++cycle;
            result.updates.push_back(hierarchical_update(dict, policy, *llm, encode, cycle));
            if (config.train.reset_stats_each_cycle) dict.reset_statistics();
        }
    }

    // Held-out evaluation over all categories, prediction only.
    const std::uint64_t eval_seed = mix_seed(config.train.seed, kEvalSalt);
    const std::vector<SyntheticSample> eval_samples =
        world.sample_batch(world.labels(), config.train.eval_samples, eval_seed);

    std::map<std::string, std::size_t> correct;
    std::map<std::string, std::size_t> total;
    for (const auto& label : world.labels()) {
        correct[label] = 0;
        total[label] = 0;
    }
    for (const SyntheticSample& sample : eval_samples) {
        const Embedding pi = meta_forward(theta, sample.proposal.r_ctx);
        const Embedding v = prompted_feature(sample.proposal.r, pi);
        const ScoreBreakdown bd = predict(dict, v, config.train.n_sel, nullptr, config.train.phi);
        total[sample.proposal.true_category] += 1;
        if (bd.predicted == sample.proposal.true_category) {
            correct[sample.proposal.true_category] += 1;
        }
    }

    std::size_t base_correct = 0, base_total = 0, novel_correct = 0, novel_total = 0;
    for (const auto& label : world.labels()) {
        const std::size_t c = correct[label];
        const std::size_t t = total[label];
        result.eval.per_category_samples[label] = t;
        result.eval.per_category_accuracy[label] =
            t == 0 ? 0.0 : static_cast<double>(c) / static_cast<double>(t);
        result.eval.dictionary_sizes[label] = dict.entry(label).descriptors.size();
        const bool is_base = std::find(base.begin(), base.end(), label) != base.end();
        if (is_base) {
            base_correct += c;
            base_total += t;
        } else {
            novel_correct += c;
            novel_total += t;
        }
    }
    result.eval.base_top1 =
        base_total == 0 ? 0.0 : static_cast<double>(base_correct) / static_cast<double>(base_total);
    result.eval.novel_top1 = novel_total == 0 ? 0.0
                                              : static_cast<double>(novel_correct) /
                                                    static_cast<double>(novel_total);
    const std::size_t all_total = base_total + novel_total;
    result.eval.overall_top1 =
        all_total == 0 ? 0.0
                       : static_cast<double>(base_correct + novel_correct) /
                             static_cast<double>(all_total);

    result.checkpoint.params = std::move(theta);
    result.checkpoint.step = config.train.n_iters;
    result.checkpoint.lr = config.train.lr;
    result.checkpoint.tau = config.train.tau;
    return result;
}

std::string eval_csv(const EvalReport& report, const ExperimentResult& result) {
    std::string out = "category,split,samples,correct,accuracy,dict_size\n";
    for (const auto& [label, acc] : report.per_category_accuracy) {
        const std::size_t samples = report.per_category_samples.at(label);
        const auto correct = static_cast<std::size_t>(
            std::llround(acc * static_cast<double>(samples)));
        const bool is_base = std::find(result.base_categories.begin(),
                                       result.base_categories.end(),
                                       label) != result.base_categories.end();
        out += label;
        out += is_base ? ",base," : ",novel,";
        out += std::to_string(samples) + "," + std::to_string(correct) + "," +
               format_double(acc) + "," + std::to_string(report.dictionary_sizes.at(label)) + "\n";
    }
    return out;
}

std::string eval_markdown(const EvalReport& report, const ExperimentResult& result) {
    std::size_t total_desc = 0, min_desc = SIZE_MAX, max_desc = 0;
    for (const auto& [label, size] : report.dictionary_sizes) {
        (void)label;
        total_desc += size;
        min_desc = std::min(min_desc, size);
        max_desc = std::max(max_desc, size);
    }
    if (report.dictionary_sizes.empty()) min_desc = 0;

    std::string out;
    out += "# Evaluation summary\n\n";
    out += "| split | top-1 accuracy |\n|---|---|\n";
    out += "| base | " + format_double(report.base_top1) + " |\n";
    out += "| novel | " + format_double(report.novel_top1) + " |\n";
    out += "| overall | " + format_double(report.overall_top1) + " |\n\n";
    out += "Dictionary: " + std::to_string(total_desc) + " descriptors across " +
           std::to_string(report.dictionary_sizes.size()) + " categories (min " +
           std::to_string(min_desc) + ", max " + std::to_string(max_desc) + ").\n\n";
    out += "| category | split | samples | accuracy | dict size |\n|---|---|---|---|---|\n";
    for (const auto& [label, acc] : report.per_category_accuracy) {
        const bool is_base = std::find(result.base_categories.begin(),
                                       result.base_categories.end(),
                                       label) != result.base_categories.end();
        out += "| " + label + " | " + (is_base ? "base" : "novel") + " | " +
               std::to_string(report.per_category_samples.at(label)) + " | " +
               format_double(acc) + " | " +
               std::to_string(report.dictionary_sizes.at(label)) + " |\n";
    }
    return out;
}

std::string loss_csv(const EvalReport& report) {
    std::string out = "step,loss\n";
    char buf[64];
    for (const auto& [step, loss] : report.loss_curve) {
        std::snprintf(buf, sizeof(buf), "%d,%.9g\n", step, loss);
        out += buf;
    }
    return out;
}

std::string updates_jsonl(const std::vector<UpdateReport>& updates) {
    std::string out;
    for (const UpdateReport& report : updates) {
        for (const CategoryUpdate& cu : report.per_category) {
            json rec;
            rec["cycle"] = report.cycle;
            rec["category"] = cu.category;
            rec["pruned"] = cu.pruned;
            rec["queries"] = cu.queries;
            rec["replies"] = cu.replies;
            rec["parsed"] = cu.parsed;
            rec["merged"] = cu.merged;
            rec["inserted"] = cu.inserted;
            rec["errors"] = cu.errors;
            out += rec.dump();
            out += "\n";
        }
    }
    return out;
}

} // namespace ovd
