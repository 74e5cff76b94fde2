// Operator entry point: train a descriptor-dictionary classifier against the
// synthetic world, sweep the ablation grid, or inspect a saved dictionary.

#include "ovd/config.hpp"
#include "ovd/dictionary.hpp"
#include "ovd/errors.hpp"
#include "ovd/experiment.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

namespace {

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw ovd::IoError("cannot open \"" + path + "\" for writing");
    out << content;
    if (!out) throw ovd::IoError("write failed for \"" + path + "\"");
}

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", x);
    return buf;
}

int cmd_train(const std::string& config_path, const std::string& out_override) {
    ovd::ExperimentConfig config = ovd::load_config(config_path);
    if (!out_override.empty()) config.io.out_dir = out_override;
    std::filesystem::create_directories(config.io.out_dir);

    const ovd::ExperimentResult result = ovd::run_experiment(config);

    result.dict.save(config.dict_path());
    ovd::save_checkpoint(result.checkpoint, config.checkpoint_path());
    write_file(config.io.out_dir + "/eval.csv", ovd::eval_csv(result.eval, result));
    write_file(config.io.out_dir + "/eval.md", ovd::eval_markdown(result.eval, result));
    write_file(config.io.out_dir + "/loss.csv", ovd::loss_csv(result.eval));
    write_file(config.io.out_dir + "/updates.jsonl", ovd::updates_jsonl(result.updates));
    ovd::save_config(config, config.io.out_dir + "/config.json");

    std::cout << "mode=" << ovd::to_string(config.train.mode)
              << " seed=" << config.train.seed << "\n"
              << "base_top1=" << fmt(result.eval.base_top1) << "\n"
              << "novel_top1=" << fmt(result.eval.novel_top1) << "\n"
              << "overall_top1=" << fmt(result.eval.overall_top1) << "\n"
              << "artifacts=" << config.io.out_dir << "\n";
    return 0;
}

struct RunRow {
    std::string mode;
    std::uint64_t seed;
    double base;
    double novel;
    double overall;
};

struct Summary {
    double base_mean, base_std;
    double novel_mean, novel_std;
    double overall_mean, overall_std;
};

Summary summarize(const std::vector<RunRow>& rows) {
    const auto stats = [&](auto pick) {
        double mean = 0.0;
        for (const RunRow& r : rows) mean += pick(r);
        mean /= static_cast<double>(rows.size());
        double var = 0.0;
        for (const RunRow& r : rows) {
            const double d = pick(r) - mean;
            var += d * d;
        }
        var = rows.size() > 1 ? var / static_cast<double>(rows.size() - 1) : 0.0;
        return std::pair<double, double>{mean, std::sqrt(var)};
    };
    Summary s{};
    std::tie(s.base_mean, s.base_std) = stats([](const RunRow& r) { return r.base; });
    std::tie(s.novel_mean, s.novel_std) = stats([](const RunRow& r) { return r.novel; });
    std::tie(s.overall_mean, s.overall_std) = stats([](const RunRow& r) { return r.overall; });
    return s;
}

int cmd_ablate(const std::string& config_path, const std::string& out_override) {
    ovd::ExperimentConfig config = ovd::load_config(config_path);
    if (!out_override.empty()) config.io.out_dir = out_override;
    std::filesystem::create_directories(config.io.out_dir);

    const std::vector<ovd::Mode> modes = {ovd::Mode::Full, ovd::Mode::Static,
                                          ovd::Mode::NoPrompt, ovd::Mode::NoH, ovd::Mode::NoC};

    std::vector<RunRow> rows;
    for (const ovd::Mode mode : modes) {
        for (const std::uint64_t seed : config.train.seeds) {
            ovd::ExperimentConfig run_config = config;
            run_config.train.mode = mode;
            run_config.train.seed = seed;
            const ovd::ExperimentResult result = ovd::run_experiment(run_config);
            rows.push_back({ovd::to_string(mode), seed, result.eval.base_top1,
                            result.eval.novel_top1, result.eval.overall_top1});
        }
    }

    std::string runs_csv = "mode,seed,base_top1,novel_top1,overall_top1\n";
    for (const RunRow& r : rows) {
        runs_csv += r.mode + "," + std::to_string(r.seed) + "," + fmt(r.base) + "," +
                    fmt(r.novel) + "," + fmt(r.overall) + "\n";
    }
    write_file(config.io.out_dir + "/ablate.csv", runs_csv);

    std::string summary_csv =
        "mode,base_mean,base_std,novel_mean,novel_std,overall_mean,overall_std\n";
    std::cout << "| mode | base top-1 | novel top-1 | overall top-1 |\n|---|---|---|---|\n";
    for (const ovd::Mode mode : modes) {
        std::vector<RunRow> mode_rows;
        std::copy_if(rows.begin(), rows.end(), std::back_inserter(mode_rows),
                     [&](const RunRow& r) { return r.mode == ovd::to_string(mode); });
        const Summary s = summarize(mode_rows);
        summary_csv += std::string(ovd::to_string(mode)) + "," + fmt(s.base_mean) + "," +
                       fmt(s.base_std) + "," + fmt(s.novel_mean) + "," + fmt(s.novel_std) + "," +
                       fmt(s.overall_mean) + "," + fmt(s.overall_std) + "\n";
        std::cout << "| " << ovd::to_string(mode) << " | " << fmt(s.base_mean) << " ± "
                  << fmt(s.base_std) << " | " << fmt(s.novel_mean) << " ± " << fmt(s.novel_std)
                  << " | " << fmt(s.overall_mean) << " ± " << fmt(s.overall_std) << " |\n";
    }
    write_file(config.io.out_dir + "/ablate_summary.csv", summary_csv);
    std::cout << "artifacts=" << config.io.out_dir << "\n";
    return 0;
}

int cmd_inspect(const std::string& dict_path, const std::string& category, std::size_t top) {
    ovd::DescriptorDictionary dict;
    try {
        dict = ovd::DescriptorDictionary::load(dict_path, 0);
    } catch (const ovd::IoError& e) {
        // A bad path is a usage error for inspect, same as a corrupt file.
        throw ovd::FormatError(e.what());
    }

    std::vector<std::string> targets;
    if (category.empty()) {
        targets = dict.categories();
    } else {
        if (!dict.has_category(category)) {
            std::string known;
            for (const auto& label : dict.categories()) {
                if (!known.empty()) known += ", ";
                known += label;
            }
            throw ovd::FormatError("unknown category \"" + category + "\"; known: " + known);
        }
        targets.push_back(category);
    }

    std::cout << "dictionary " << dict_path << " (dim=" << dict.dim()
              << ", cycle=" << dict.cycle() << ")\n";
    for (const auto& label : targets) {
        const ovd::CategoryEntry& entry = dict.entry(label);
        std::cout << "\n" << label << " (K=" << entry.descriptors.size()
                  << ", predictions=" << entry.predictions_total
                  << ", misclassified=" << entry.misclassified_total << ")\n";

        const auto confusers = dict.confusing_categories(label, 3, 1);
        if (!confusers.empty()) {
            std::cout << "  top confusers:";
            for (const auto& other : confusers) {
                std::cout << " " << other << "(" << entry.confusion.at(other) << ")";
            }
            std::cout << "\n";
        }

        std::vector<std::size_t> order(entry.descriptors.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return entry.descriptors[a].usage > entry.descriptors[b].usage;
        });
        const std::size_t limit = top == 0 ? order.size() : std::min(top, order.size());
        std::printf("  %-28s %10s %8s\n", "descriptor", "usage", "cycle");
        for (std::size_t i = 0; i < limit; ++i) {
            const ovd::Descriptor& d = entry.descriptors[order[i]];
            std::printf("  %-28s %10llu %8d\n", d.text.c_str(),
                        static_cast<unsigned long long>(d.usage), d.created_at_cycle);
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"descriptor-dictionary open-vocabulary classification engine"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    std::string dict_path;
    std::string category;
    std::size_t top = 0;

    CLI::App* train = app.add_subcommand("train", "run one training + evaluation experiment");
    train->add_option("--config", config_path, "experiment config JSON")->required();
    train->add_option("--out", out_override, "override io.out_dir");

    CLI::App* ablate =
        app.add_subcommand("ablate", "run full/static/noprompt/noH/noC over shared seeds");
    ablate->add_option("--config", config_path, "experiment config JSON")->required();
    ablate->add_option("--out", out_override, "override io.out_dir");

    CLI::App* inspect = app.add_subcommand("inspect", "print a saved dictionary");
    inspect->add_option("dict", dict_path, "dictionary JSON file")->required();
    inspect->add_option("--category", category, "restrict to one category");
    inspect->add_option("--top", top, "rows per category (0 = all)");

    try {
        app.parse(argc, argv);
        if (train->parsed()) return cmd_train(config_path, out_override);
        if (ablate->parsed()) return cmd_ablate(config_path, out_override);
        if (inspect->parsed()) return cmd_inspect(dict_path, category, top);
        return 1;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const ovd::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ovd::FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 2;
    } catch (const ovd::DimMismatch& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 2;
    } catch (const ovd::LlmUnavailable& e) {
        std::cerr << "llm unavailable: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
