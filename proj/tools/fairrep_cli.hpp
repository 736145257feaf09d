#pragma once

// Command-line front end. Subcommands: train, evaluate, explain, data-stats, cv.
// Exit codes: 0 success, 1 usage error, 2 data/model error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fairrep/fairrep.hpp"

namespace fairrep::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string dataset;
    std::string model_path;
    std::string out_dir;
    std::optional<std::size_t> jobs;
    std::optional<std::size_t> budget;
    std::string feature;
};

/// `--dataset` accepts `compas`, `bank`, `csv`, optionally followed by `=PATH`.
inline void apply_dataset_flag(ExperimentConfig& cfg, const std::string& flag) {
    if (flag.empty()) return;
    const auto eq = flag.find('=');
    cfg.dataset = flag.substr(0, eq);
    if (eq != std::string::npos) cfg.data_path = flag.substr(eq + 1);
}

inline ExperimentConfig build_config(const CommonOptions& o) {
    ExperimentConfig cfg;
    if (!o.config_path.empty()) cfg = ExperimentConfig::load(o.config_path);
    apply_dataset_flag(cfg, o.dataset);
    if (o.seed) cfg.seed = *o.seed;
    if (o.jobs) cfg.jobs = *o.jobs;
    if (o.budget) cfg.budget = *o.budget;
    return cfg;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << content;
}

inline std::filesystem::path out_path(const CommonOptions& o, const std::string& name) {
    return std::filesystem::path(o.out_dir.empty() ? "." : o.out_dir) / name;
}

inline std::string data_stats_csv(const Dataset& ds, const std::string& feature) {
    std::string out = "feature,mean_" + ds.group_names.first + ",mean_" + ds.group_names.second +
                      ",difference\n";
    std::vector<std::string> names = feature.empty() ? ds.feature_names
                                                     : std::vector<std::string>{feature};
    for (const auto& name : names) {
        const auto m = group_feature_means(ds, name);
        out += csv::escape(name) + "," + format_double(m.group0) + "," + format_double(m.group1) +
               "," + format_double(m.difference) + "\n";
    }
    return out;
}

/// Dataset for evaluate/explain: the flag wins, otherwise the one recorded in
/// the model artifact.
inline Dataset dataset_for_model(const CommonOptions& o, const ModelArtifact& art,
                                 ExperimentConfig& cfg) {
    if (o.dataset.empty() && art.metadata.contains("dataset")) {
        cfg.dataset = art.metadata.at("dataset").get<std::string>();
        if (cfg.data_path.empty()) cfg.data_path = art.metadata.value("data_path", std::string{});
        if (cfg.schema_path.empty()) cfg.schema_path = art.metadata.value("schema", std::string{});
    }
    Dataset ds = load_dataset(cfg);
    if (ds.feature_names != art.normalizer.feature_names()) {
        throw DataError("dataset features do not match the features the model was trained on");
    }
    return ds;
}

inline int cmd_train(const CommonOptions& o, std::ostream& out) {
    ExperimentConfig cfg = build_config(o);
    cfg.validate();
    const Dataset ds = load_dataset(cfg);
    // last fold is held out for the reported metrics
    const auto folds = split_folds(ds, cfg.folds, derive_seed(cfg.seed, {501}));
    const auto& split = folds.back();
    auto outcome = fit_and_evaluate(ds, split.train, split.test, cfg.fixed, cfg,
                                    derive_seed(cfg.seed, {502}));
    outcome.artifact.metadata = {{"dataset", cfg.dataset},
                                 {"data_path", cfg.resolved_data_path()},
                                 {"schema", cfg.schema_path},
                                 {"hyperparameters", cfg.fixed.to_json()},
                                 {"epochs", cfg.epochs},
                                 {"batch_size", cfg.batch_size},
                                 {"max_pairs", cfg.max_pairs},
                                 {"seed", cfg.seed},
                                 {"train_rows", split.train.size()},
                                 {"test_rows", split.test.size()}};
    const auto model_file = out_path(o, "model.json");
    write_file(model_file, outcome.artifact.to_json().dump(1) + "\n");
    write_file(out_path(o, "metrics.json"), outcome.metrics.to_json().dump(1) + "\n");
    write_file(out_path(o, "metrics.csv"), "dataset,model,split," + MetricsRecord::csv_header() +
                                               "\n" + cfg.dataset + ",interpretable,test," +
                                               outcome.metrics.csv_row() + "\n");
    out << outcome.metrics.to_json().dump(1) << "\n";
    return kExitOk;
}

inline int cmd_evaluate(const CommonOptions& o, std::ostream& out) {
    ExperimentConfig cfg = build_config(o);
    const auto art = ModelArtifact::load(o.model_path);
    const Dataset ds = dataset_for_model(o, art, cfg);
    const Vector s = score_raw(art.model, art.normalizer, ds.features);
    const auto m = evaluate(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())),
                            ds.relevance, ds.group, cfg.ndcg_k, cfg.rnd_step);
    if (!o.out_dir.empty()) {
        write_file(out_path(o, "metrics.json"), m.to_json().dump(1) + "\n");
        write_file(out_path(o, "metrics.csv"), "dataset,model,split," + MetricsRecord::csv_header() +
                                                   "\n" + cfg.dataset + ",interpretable,all," +
                                                   m.csv_row() + "\n");
    }
    out << m.to_json().dump(1) << "\n";
    return kExitOk;
}

inline int cmd_explain(const CommonOptions& o, std::ostream& out) {
    ExperimentConfig cfg = build_config(o);
    const auto art = ModelArtifact::load(o.model_path);
    const Dataset ds = dataset_for_model(o, art, cfg);
    const auto report = explain(art.model, ds, art.normalizer);
    write_file(out_path(o, "correction_report.csv"), report.to_csv());
    write_file(out_path(o, "correction_report.txt"), report.to_table());
    out << report.to_table();
    return kExitOk;
}

inline int cmd_data_stats(const CommonOptions& o, std::ostream& out) {
    ExperimentConfig cfg = build_config(o);
    const Dataset ds = load_dataset(cfg);
    const std::string text = data_stats_csv(ds, o.feature);
    if (!o.out_dir.empty()) write_file(out_path(o, "data_stats.csv"), text);
    out << text;
    return kExitOk;
}

inline int cmd_cv(const CommonOptions& o, std::ostream& out, std::ostream& err) {
    ExperimentConfig cfg = build_config(o);
    cfg.validate();
    const Dataset ds = load_dataset(cfg);
    err << "nested CV on " << cfg.dataset << ": " << ds.size() << " rows, " << ds.width()
        << " features, budget " << cfg.budget << ", k=" << cfg.folds << "\n";
    const auto table = run_nested_cv(ds, cfg, [&](const std::string& msg) {
        err << "\r" << msg << std::flush;
    });
    err << "\n";
    write_file(out_path(o, "results.csv"), table.to_csv());
    write_file(out_path(o, "results.json"), table.to_json().dump(1) + "\n");
    out << table.to_csv();
    return kExitOk;
}

/// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
    CLI::App app{"Interpretable fair ranking with correction vectors", "fairrep"};
    app.require_subcommand(1);
    CommonOptions o;

    auto add_config = [&](CLI::App* sub, bool required) {
        auto* opt = sub->add_option("--config", o.config_path, "experiment config file (key = value)");
        if (required) opt->required();
    };
    auto add_dataset = [&](CLI::App* sub) {
        sub->add_option("--dataset", o.dataset, "compas | bank | csv, optionally NAME=PATH");
    };
    auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", o.seed, "base random seed"); };
    auto add_out = [&](CLI::App* sub) { sub->add_option("--out-dir", o.out_dir, "output directory"); };
    auto add_model = [&](CLI::App* sub) {
        sub->add_option("--model", o.model_path, "model artifact JSON")->required();
    };

    auto* train = app.add_subcommand("train", "train one model with fixed hyperparameters");
    add_config(train, false);
    add_dataset(train);
    add_seed(train);
    add_out(train);

    auto* evaluate_cmd = app.add_subcommand("evaluate", "score a dataset with a trained model");
    add_model(evaluate_cmd);
    add_config(evaluate_cmd, false);
    add_dataset(evaluate_cmd);
    add_out(evaluate_cmd);

    auto* explain_cmd = app.add_subcommand("explain", "per-group correction report in raw units");
    add_model(explain_cmd);
    add_config(explain_cmd, false);
    add_dataset(explain_cmd);
    add_out(explain_cmd);

    auto* stats = app.add_subcommand("data-stats", "per-group feature means");
    add_config(stats, false);
    add_dataset(stats);
    add_out(stats);
    stats->add_option("--feature", o.feature, "single feature to report");

    auto* cv = app.add_subcommand("cv", "nested cross-validation with random search");
    add_config(cv, true);
    add_dataset(cv);
    add_seed(cv);
    add_out(cv);
    cv->add_option("--jobs", o.jobs, "parallel fit jobs");
    cv->add_option("--budget", o.budget, "number of sampled configurations");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (train->parsed()) return cmd_train(o, out);
        if (evaluate_cmd->parsed()) return cmd_evaluate(o, out);
        if (explain_cmd->parsed()) return cmd_explain(o, out);
        if (stats->parsed()) return cmd_data_stats(o, out);
        if (cv->parsed()) return cmd_cv(o, out, err);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    }
    err << app.help();
    return kExitUsage;
}

}  // namespace fairrep::cli
