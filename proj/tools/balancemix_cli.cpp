// Experiment driver: generate / train / evaluate / inspect.
//
// Exit codes: 0 success, 2 configuration error, 3 I/O error,
// 4 contract violation.

#include <cstdlib>
#include <iomanip>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "balancemix/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace balancemix;

namespace {

struct ExperimentConfig {
    GeneratorConfig generator;
    NoiseSpec noise;
    TrainConfig train;
    std::optional<GroupSpec> groups;  // absolute thresholds; fractions of N otherwise
    double many_fraction = 0.25;
    double few_fraction = 0.05;
    double val_fraction = 0.2;
};

ExperimentConfig load_experiment_config(const fs::path& path) {
    const json j = read_json_file(path);
    require_known_keys(j, {"generator", "noise", "train", "groups", "seed"}, "config");

    ExperimentConfig config;
    if (j.contains("generator")) {
        config.generator = generator_config_from_json(j.at("generator"));
    }
    if (j.contains("noise")) config.noise = noise_from_json(j.at("noise"));
    bool epsilon_given = false;
    if (j.contains("train")) {
        config.train = train_config_from_json(j.at("train"));
        epsilon_given = j.at("train").contains("epsilon");
        config.val_fraction = j.at("train").value("val_fraction", config.val_fraction);
        if (config.val_fraction < 0.0 || config.val_fraction >= 1.0) {
            throw ConfigError("train: val_fraction must lie in [0, 1)");
        }
    }
    // Re-labeling threshold defaults per noise setting: 0.975 in general,
    // 0.550 when only a single positive label per instance survives.
    if (!epsilon_given && config.noise.type == NoiseSpec::Type::SinglePositive) {
        config.train.epsilon = 0.550;
    }
    if (j.contains("groups")) {
        const json& g = j.at("groups");
        require_known_keys(g, {"many_min", "few_max", "many_fraction", "few_fraction"}, "groups");
        if (g.contains("many_min") || g.contains("few_max")) {
            GroupSpec spec;
            spec.many_min = g.value("many_min", spec.many_min);
            spec.few_max = g.value("few_max", spec.few_max);
            spec.validate();
            config.groups = spec;
        }
        config.many_fraction = g.value("many_fraction", config.many_fraction);
        config.few_fraction = g.value("few_fraction", config.few_fraction);
    }
    if (j.contains("seed")) {
        const auto seed = j.at("seed").get<std::uint64_t>();
        config.generator.seed = seed;
        config.train.seed = seed;
    }
    return config;
}

GroupSpec resolve_groups(const ExperimentConfig& config, std::size_t n) {
    if (config.groups.has_value()) return *config.groups;
    return GroupSpec::fractions_of(n, config.many_fraction, config.few_fraction);
}

Dataset apply_noise(const Dataset& clean, const NoiseSpec& noise) {
    switch (noise.type) {
        case NoiseSpec::Type::None: return clean;
        case NoiseSpec::Type::Mislabel: return inject_mislabeling(clean, noise.tau, noise.seed);
        case NoiseSpec::Type::Flip: return inject_random_flip(clean, noise.tau, noise.seed);
        case NoiseSpec::Type::SinglePositive: return inject_single_positive(clean, noise.seed);
    }
    return clean;
}

int env_threads() {
    const char* env = std::getenv("BALANCEMIX_THREADS");
    if (env == nullptr) return 1;
    try {
        const int t = std::stoi(env);
        if (t < 1) throw ConfigError("BALANCEMIX_THREADS must be >= 1");
        return t;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("BALANCEMIX_THREADS is not an integer");
    }
}

int cmd_generate(const fs::path& config_path, const fs::path& out_path,
                 std::optional<std::uint64_t> seed_override) {
    ExperimentConfig config = load_experiment_config(config_path);
    if (seed_override.has_value()) config.generator.seed = *seed_override;

    Dataset ds = generate(config.generator);
    ds = apply_noise(ds, config.noise);

    write_dataset(out_path, ds);
    json manifest = dataset_manifest(ds);
    manifest["generator"] = generator_config_to_json(config.generator);
    write_text_file(out_path.string() + ".manifest.json", manifest.dump(2) + "\n");

    std::cout << manifest.dump(2) << std::endl;
    return 0;
}

int cmd_train(const fs::path& config_path, const fs::path& dataset_path, const fs::path& out_dir,
              std::optional<std::uint64_t> seed_override, const std::string& mode_override,
              const fs::path& valset_path) {
    ExperimentConfig config = load_experiment_config(config_path);
    if (seed_override.has_value()) config.train.seed = *seed_override;
    if (!mode_override.empty()) config.train.mode = parse_train_mode(mode_override);
    config.train.threads = env_threads();

    const Dataset full = read_dataset(dataset_path);
    Dataset train_ds, val_ds;
    if (!valset_path.empty()) {
        train_ds = full;
        val_ds = read_dataset(valset_path);
    } else {
        std::tie(train_ds, val_ds) = split_dataset(full, config.val_fraction);
    }

    const GroupSpec groups = resolve_groups(config, train_ds.size());
    const TrainResult result = train(config.train, train_ds, val_ds, groups);

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create run directory " + out_dir.string());

    json effective{{"train", train_config_to_json(config.train)},
                   {"groups", group_spec_to_json(groups)},
                   {"dataset", dataset_path.string()},
                   {"valset", valset_path.empty() ? json(nullptr) : json(valset_path.string())},
                   {"val_fraction", config.val_fraction}};
    write_text_file(out_dir / "config.json", effective.dump(2) + "\n");

    std::string epochs_log;
    for (const EpochReport& report : result.reports) {
        epochs_log += epoch_report_to_json(report).dump() + "\n";
    }
    write_text_file(out_dir / "epochs.jsonl", epochs_log);

    std::string diag_log;
    for (const EpochDiagnostics& diag : result.diagnostics) {
        diag_log += epoch_diagnostics_to_json(diag).dump() + "\n";
    }
    write_text_file(out_dir / "diagnostics.jsonl", diag_log);

    const ManagementDiagnostics selection =
        selection_metrics(result.ledger, train_ds.true_labels, train_ds.observed_labels);
    const json metrics = metrics_to_json(result.reports.back().validation, &selection);
    write_text_file(out_dir / "metrics.json", metrics.dump(2) + "\n");

    write_checkpoint(out_dir / "checkpoint.json", Checkpoint{result.model, config.train});

    std::cout << metrics.dump(2) << std::endl;
    return 0;
}

int cmd_evaluate(const fs::path& checkpoint_path, const fs::path& dataset_path,
                 const std::string& label_kind) {
    const Checkpoint checkpoint = read_checkpoint(checkpoint_path);
    const Dataset ds = read_dataset(dataset_path);
    if (ds.feature_dim() != checkpoint.model.input_dim() ||
        ds.num_classes() != checkpoint.model.num_classes()) {
        throw ContractError("evaluate: dataset dims do not match checkpoint model");
    }

    Dataset eval_ds = ds;
    if (label_kind == "observed") {
        eval_ds.true_labels = ds.observed_labels;
    } else if (label_kind != "true") {
        throw ConfigError("evaluate: --labels must be 'true' or 'observed'");
    }

    const auto counts = eval_ds.true_positive_counts();
    const GroupSpec spec = GroupSpec::fractions_of(eval_ds.size());
    const MetricsSnapshot snapshot =
        evaluate(checkpoint.model, eval_ds, counts, spec);
    std::cout << metrics_to_json(snapshot).dump(2) << std::endl;
    return 0;
}

int cmd_inspect(const fs::path& run_dir, const std::string& what) {
    const fs::path diag_path = run_dir / "diagnostics.jsonl";
    std::ifstream in(diag_path);
    if (!in) throw IoError("missing run artifact " + diag_path.string());

    std::cout << std::setprecision(17);  // keep probabilities round-trip exact

    std::string line;
    bool header_done = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json diag;
        try {
            diag = json::parse(line);
        } catch (const json::parse_error& e) {
            throw IoError("corrupt diagnostics line: " + std::string(e.what()));
        }
        const int epoch = diag.at("epoch").get<int>();
        if (what == "sampler") {
            if (!header_done) {
                std::cout << "epoch,kind,index,value\n";
                header_done = true;
            }
            const auto dump_vector = [&](const char* kind, const json& values) {
                for (std::size_t i = 0; i < values.size(); ++i) {
                    std::cout << epoch << ',' << kind << ',' << i << ','
                              << values[i].get<double>() << '\n';
                }
            };
            dump_vector("prob", diag.at("probs"));
            dump_vector("presence", diag.at("presence"));
            dump_vector("absence", diag.at("absence"));
        } else if (what == "gmm") {
            if (!header_done) {
                std::cout << "epoch,class,polarity,mean_clean,mean_noisy,var_clean,var_noisy,"
                             "weight_clean,weight_noisy,status\n";
                header_done = true;
            }
            for (const json& entry : diag.at("gmms")) {
                for (const char* polarity : {"positive", "negative"}) {
                    const json& g = entry.at(polarity);
                    std::cout << epoch << ',' << entry.at("class").get<int>() << ',' << polarity
                              << ',' << g.at("means")[0].get<double>() << ','
                              << g.at("means")[1].get<double>() << ','
                              << g.at("variances")[0].get<double>() << ','
                              << g.at("variances")[1].get<double>() << ','
                              << g.at("weights")[0].get<double>() << ','
                              << g.at("weights")[1].get<double>() << ','
                              << g.at("status").get<std::string>() << '\n';
                }
            }
        } else if (what == "ledger") {
            if (!header_done) {
                std::cout << "epoch,clean,relabeled,ambiguous\n";
                header_done = true;
            }
            const json& counts = diag.at("counts");
            std::cout << epoch << ',' << counts.at("clean").get<std::size_t>() << ','
                      << counts.at("relabeled").get<std::size_t>() << ','
                      << counts.at("ambiguous").get<std::size_t>() << '\n';
        } else {
            throw ConfigError("inspect: --what must be sampler, gmm or ledger");
        }
    }
    if (!header_done) throw IoError("run directory holds no diagnostics for " + what);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"BalanceMix synthetic-benchmark experiment driver"};
    app.require_subcommand(1);

    std::string config_path, dataset_path, out_path, checkpoint_path, run_dir;
    std::string mode_override, what = "sampler", label_kind = "true", valset_path;
    std::uint64_t seed = 0;
    bool seed_set = false;

    auto add_seed = [&](CLI::App* cmd) {
        cmd->add_option("--seed", seed, "Override the config seed")
            ->each([&](const std::string&) { seed_set = true; });
    };

    CLI::App* gen = app.add_subcommand("generate", "Generate a dataset file");
    gen->add_option("--config", config_path, "Experiment config JSON")->required();
    gen->add_option("--out", out_path, "Output dataset path")->required();
    add_seed(gen);

    CLI::App* tr = app.add_subcommand("train", "Train a model on a dataset file");
    tr->add_option("--config", config_path, "Experiment config JSON")->required();
    tr->add_option("--dataset", dataset_path, "Dataset file")->required();
    tr->add_option("--out", out_path, "Run directory")->required();
    tr->add_option("--mode", mode_override, "balancemix or bce_baseline");
    tr->add_option("--valset", valset_path, "Separate validation dataset file");
    add_seed(tr);

    CLI::App* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset");
    ev->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
    ev->add_option("--dataset", dataset_path, "Dataset file")->required();
    ev->add_option("--labels", label_kind, "Rank against 'true' or 'observed' labels");

    CLI::App* ins = app.add_subcommand("inspect", "Dump run diagnostics as CSV");
    ins->add_option("--run", run_dir, "Run directory")->required();
    ins->add_option("--what", what, "sampler, gmm or ledger")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    std::optional<std::uint64_t> seed_override;
    if (seed_set) seed_override = seed;

    try {
        if (gen->parsed()) return cmd_generate(config_path, out_path, seed_override);
        if (tr->parsed()) {
            return cmd_train(config_path, dataset_path, out_path, seed_override, mode_override,
                             valset_path);
        }
        if (ev->parsed()) return cmd_evaluate(checkpoint_path, dataset_path, label_kind);
        if (ins->parsed()) return cmd_inspect(run_dir, what);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << std::endl;
        return 2;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << std::endl;
        return 3;
    } catch (const ContractError& e) {
        std::cerr << "contract violation: " << e.what() << std::endl;
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 4;
    }
    return 0;
}
