#pragma once

// Experiment orchestration: config files, seeded random search, nested
// cross-validation with equal-weight model selection, and result tables.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairrep/correction_model.hpp"
#include "fairrep/dataset.hpp"
#include "fairrep/error.hpp"
#include "fairrep/metrics.hpp"
#include "fairrep/normalizer.hpp"

namespace fairrep {

/// Hyperparameters searched per fit.
struct HyperParams {
    std::size_t depth = 1;  // hidden extractor layers
    double gamma = 1.0;
    double learning_rate = 0.01;

    bool operator==(const HyperParams&) const = default;

    nlohmann::json to_json() const {
        return {{"depth", depth}, {"gamma", gamma}, {"learning_rate", learning_rate}};
    }
};

struct SearchSpace {
    std::size_t depth_min = 1;
    std::size_t depth_max = 3;
    double gamma_min = 0.1;
    double gamma_max = 10.0;
    double lr_min = 1e-4;
    double lr_max = 1e-1;

    void validate() const {
        if (depth_min > depth_max) throw ConfigError("search space: depth_min > depth_max");
        if (!(gamma_min > 0.0) || gamma_min > gamma_max) {
            throw ConfigError("search space: need 0 < gamma_min <= gamma_max for log-uniform sampling");
        }
        if (!(lr_min > 0.0) || lr_min > lr_max) {
            throw ConfigError("search space: need 0 < lr_min <= lr_max for log-uniform sampling");
        }
    }
};

/// Settings for one experiment, read from a `key = value` file.
struct ExperimentConfig {
    std::string dataset = "compas";  // compas | bank | csv
    std::string data_path;           // defaults per dataset when empty
    std::string schema_path;         // csv datasets only
    NormalizerKind normalizer = NormalizerKind::standard;
    Activation final_activation = Activation::tanh;
    Activation hidden_activation = Activation::tanh;
    std::size_t hidden_width = 0;     // 0 = input width
    std::size_t adversary_hidden = 0; // 0 = input width
    SearchSpace space;
    HyperParams fixed;                // used by `train`
    std::size_t epochs = 50;
    std::size_t batch_size = 64;
    std::size_t max_pairs = 100000;
    std::size_t folds = 3;
    std::size_t budget = 30;
    std::uint64_t seed = 0;
    std::size_t ndcg_k = 500;
    std::size_t rnd_step = 10;
    std::size_t jobs = 1;

    std::string resolved_data_path() const {
        if (!data_path.empty()) return data_path;
        if (dataset == "compas") return "data/compas-scores-two-years.csv";
        if (dataset == "bank") return "data/bank-full.csv";
        throw ConfigError("dataset '" + dataset + "' needs an explicit data_path");
    }

    void validate() const {
        if (folds < 2) throw ConfigError("folds must be at least 2");
        if (budget < 1) throw ConfigError("budget must be at least 1");
        if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
        if (ndcg_k < 1) throw ConfigError("ndcg_k must be at least 1");
        if (dataset != "compas" && dataset != "bank" && dataset != "csv") {
            throw ConfigError("dataset must be compas, bank or csv, got '" + dataset + "'");
        }
        if (dataset == "csv" && schema_path.empty()) {
            throw ConfigError("csv datasets need a schema path");
        }
        space.validate();
        check_compatibility(normalizer, final_activation);
    }

    /// Grammar: one `key = value` per line; '#' starts a comment; blank lines
    /// are ignored; unknown keys are errors.
    static ExperimentConfig parse(std::istream& in) { return parse(in, ExperimentConfig{}); }

    static ExperimentConfig parse(std::istream& in, ExperimentConfig cfg) {
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            line = csv::trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": expected 'key = value'");
            }
            const std::string key = csv::trim(line.substr(0, eq));
            const std::string value = csv::trim(line.substr(eq + 1));
            try {
                cfg.set(key, value);
            } catch (const std::invalid_argument&) {
                throw ConfigError("config line " + std::to_string(line_no) + ": bad value '" +
                                  value + "' for " + key);
            } catch (const std::out_of_range&) {
                throw ConfigError("config line " + std::to_string(line_no) + ": value out of range for " + key);
            }
        }
        return cfg;
    }

    static ExperimentConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        return parse(in);
    }

    void set(const std::string& key, const std::string& v) {
        auto size = [&](const std::string& s) {
            if (!s.empty() && s[0] == '-') throw std::invalid_argument("negative");
            return static_cast<std::size_t>(std::stoull(s));
        };
        if (key == "dataset") dataset = v;
        else if (key == "data_path") data_path = v;
        else if (key == "schema") schema_path = v;
        else if (key == "normalizer") normalizer = parse_normalizer_kind(v);
        else if (key == "final_activation") final_activation = parse_activation(v);
        else if (key == "hidden_activation") hidden_activation = parse_activation(v);
        else if (key == "hidden_width") hidden_width = size(v);
        else if (key == "adversary_hidden") adversary_hidden = size(v);
        else if (key == "depth_min") space.depth_min = size(v);
        else if (key == "depth_max") space.depth_max = size(v);
        else if (key == "gamma_min") space.gamma_min = std::stod(v);
        else if (key == "gamma_max") space.gamma_max = std::stod(v);
        else if (key == "lr_min") space.lr_min = std::stod(v);
        else if (key == "lr_max") space.lr_max = std::stod(v);
        else if (key == "depth") fixed.depth = size(v);
        else if (key == "gamma") fixed.gamma = std::stod(v);
        else if (key == "lr" || key == "learning_rate") fixed.learning_rate = std::stod(v);
        else if (key == "epochs") epochs = size(v);
        else if (key == "batch_size") batch_size = size(v);
        else if (key == "max_pairs") max_pairs = size(v);
        else if (key == "folds" || key == "k") folds = size(v);
        else if (key == "budget") budget = size(v);
        else if (key == "seed") seed = std::stoull(v);
        else if (key == "ndcg_k") ndcg_k = size(v);
        else if (key == "rnd_step") rnd_step = size(v);
        else if (key == "jobs") jobs = size(v);
        else throw ConfigError("unknown config key '" + key + "'");
    }

    ModelConfig model_config(std::size_t input_width, const HyperParams& hp) const {
        ModelConfig m;
        m.input_width = input_width;
        m.extractor_hidden.assign(hp.depth, hidden_width);
        m.hidden_activation = hidden_activation;
        m.normalizer_kind = normalizer;
        m.final_activation = final_activation;
        m.adversary_hidden = adversary_hidden;
        m.gamma = hp.gamma;
        return m;
    }

    TrainConfig train_config(const HyperParams& hp, std::uint64_t fit_seed) const {
        TrainConfig t;
        t.epochs = epochs;
        t.batch_size = batch_size;
        t.learning_rate = hp.learning_rate;
        t.max_pairs = max_pairs;
        t.seed = fit_seed;
        return t;
    }
};

inline Dataset load_dataset(const ExperimentConfig& cfg) {
    const std::string path = cfg.resolved_data_path();
    if (cfg.dataset == "compas") return load_compas(path);
    if (cfg.dataset == "bank") return load_bank(path);
    const Schema schema = Schema::load(cfg.schema_path);
    return to_dataset(load_csv(path, schema), schema);
}

/// `budget` configurations: depth uniform over the integer range, gamma and
/// learning rate log-uniform. Deterministic for a given seed.
inline std::vector<HyperParams> sample_configs(const SearchSpace& space, std::size_t budget,
                                               std::uint64_t seed) {
    space.validate();
    if (budget == 0) throw ConfigError("search budget must be at least 1");
    Rng rng(derive_seed(seed, {101}));
    std::uniform_int_distribution<std::size_t> depth(space.depth_min, space.depth_max);
    auto log_uniform = [&](double lo, double hi) {
        if (lo == hi) return lo;
        std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
        return std::clamp(std::exp(u(rng)), lo, hi);
    };
    std::vector<HyperParams> out;
    out.reserve(budget);
    for (std::size_t i = 0; i < budget; ++i) {
        HyperParams hp;
        hp.depth = depth(rng);
        hp.gamma = log_uniform(space.gamma_min, space.gamma_max);
        hp.learning_rate = log_uniform(space.lr_min, space.lr_max);
        out.push_back(hp);
    }
    return out;
}

struct ScoredCandidate {
    std::size_t index = 0;
    HyperParams params;
    MetricsRecord metrics;
};

/// Position of the candidate with the highest unweighted metric mean; ties go
/// to higher 1-rND, then to the lower config index.
inline std::size_t select_best(std::span<const ScoredCandidate> candidates) {
    if (candidates.empty()) throw ConfigError("select_best: no candidates");
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const auto& a = candidates[i];
        const auto& b = candidates[best];
        const double ma = a.metrics.mean();
        const double mb = b.metrics.mean();
        if (ma > mb) {
            best = i;
        } else if (ma == mb) {
            if (a.metrics.one_minus_rnd > b.metrics.one_minus_rnd ||
                (a.metrics.one_minus_rnd == b.metrics.one_minus_rnd && a.index < b.index)) {
                best = i;
            }
        }
    }
    return best;
}

/// Row indices (into the full dataset) that each stage of a nested CV touched.
struct FoldAudit {
    std::vector<std::size_t> outer_test;
    std::set<std::size_t> normalizer_fit;
    std::set<std::size_t> pair_rows;
    std::set<std::size_t> selection_eval;
};

struct OuterFoldResult {
    std::size_t fold = 0;
    std::size_t selected_index = 0;
    HyperParams selected;
    std::vector<ScoredCandidate> candidates;  // inner-CV mean metrics per config
    MetricsRecord test_metrics;
    FoldAudit audit;
};

struct MetricSummary {
    double mean = 0.0;
    double std = 0.0;  // population standard deviation
};

inline MetricSummary summarize(std::span<const double> v) {
    MetricSummary s;
    if (v.empty()) return s;
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(v.size()));
    return s;
}

struct ResultsRow {
    std::string dataset;
    std::string model;
    std::size_t folds = 0;
    MetricSummary ndcg;
    MetricSummary one_minus_rnd;
    MetricSummary one_minus_gpa;
};

struct ResultsTable {
    std::vector<ResultsRow> rows;
    std::vector<OuterFoldResult> outer;
    std::size_t k = 0;

    nlohmann::json to_json() const;
    std::string to_csv() const;
};

/// Trains one model on `train_idx` and scores it on `test_idx`. The normalizer
/// and the training pairs only ever see training rows.
struct FitOutcome {
    MetricsRecord metrics;
    ModelArtifact artifact;
};

inline FitOutcome fit_and_evaluate(const Dataset& ds, const std::vector<std::size_t>& train_idx,
                                   const std::vector<std::size_t>& test_idx, const HyperParams& hp,
                                   const ExperimentConfig& cfg, std::uint64_t seed,
                                   FoldAudit* audit = nullptr) {
    const Dataset train = ds.subset(train_idx);
    const Dataset test = ds.subset(test_idx);
    FitOutcome out;
    out.artifact.normalizer = Normalizer::fit(cfg.normalizer, train.features, train.feature_names);
    out.artifact.model = CorrectionModel::create(cfg.model_config(ds.width(), hp), derive_seed(seed, {21}));
    fit(out.artifact.model, train, out.artifact.normalizer, cfg.train_config(hp, derive_seed(seed, {22})));
    if (audit != nullptr) {
        audit->normalizer_fit.insert(train_idx.begin(), train_idx.end());
        audit->pair_rows.insert(train_idx.begin(), train_idx.end());
    }
    const Vector s = score_raw(out.artifact.model, out.artifact.normalizer, test.features);
    out.metrics = evaluate(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())),
                           test.relevance, test.group, cfg.ndcg_k, cfg.rnd_step);
    return out;
}

namespace detail {

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Each index is handled
/// by exactly one call; the first exception is rethrown after all threads join.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> workers;
    for (std::size_t t = 0; t < jobs; ++t) {
        workers.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& w : workers) w.join();
    if (error) std::rethrow_exception(error);
}

inline std::vector<std::size_t> map_indices(const std::vector<std::size_t>& base,
                                            const std::vector<std::size_t>& local) {
    std::vector<std::size_t> out;
    out.reserve(local.size());
    for (auto i : local) out.push_back(base[i]);
    return out;
}

}  // namespace detail

using ProgressFn = std::function<void(const std::string&)>;

/// Outer k folds; inside each outer training set an inner k-fold CV scores
/// every sampled config, the best (equal metric weights) is retrained on the
/// whole outer training set and evaluated on the outer test fold.
inline ResultsTable run_nested_cv(const Dataset& ds, const ExperimentConfig& cfg,
                                  const ProgressFn& progress = {}) {
    cfg.validate();
    const std::size_t k = cfg.folds;
    const auto configs = sample_configs(cfg.space, cfg.budget, cfg.seed);
    const auto outer = split_folds(ds, k, derive_seed(cfg.seed, {201}));

    struct InnerSplit {
        std::vector<std::vector<std::size_t>> train;  // full-dataset indices
        std::vector<std::vector<std::size_t>> test;
    };
    std::vector<InnerSplit> inner(k);
    for (std::size_t o = 0; o < k; ++o) {
        const Dataset outer_train = ds.subset(outer[o].train);
        const auto folds = split_folds(outer_train, k, derive_seed(cfg.seed, {202, o}));
        for (const auto& f : folds) {
            inner[o].train.push_back(detail::map_indices(outer[o].train, f.train));
            inner[o].test.push_back(detail::map_indices(outer[o].train, f.test));
        }
    }

    // (outer, config, inner) jobs, results keyed by position
    const std::size_t per_outer = configs.size() * k;
    std::vector<MetricsRecord> inner_metrics(k * per_outer);
    std::vector<FoldAudit> job_audit(k * per_outer);
    std::atomic<std::size_t> done{0};
    std::mutex progress_mutex;
    detail::parallel_for(inner_metrics.size(), cfg.jobs, [&](std::size_t job) {
        const std::size_t o = job / per_outer;
        const std::size_t c = (job % per_outer) / k;
        const std::size_t f = job % k;
        const auto seed = derive_seed(cfg.seed, {301, o, c, f});
        auto outcome = fit_and_evaluate(ds, inner[o].train[f], inner[o].test[f], configs[c], cfg,
                                        seed, &job_audit[job]);
        job_audit[job].selection_eval.insert(inner[o].test[f].begin(), inner[o].test[f].end());
        inner_metrics[job] = outcome.metrics;
        const auto n = ++done;
        if (progress) {
            std::lock_guard lock(progress_mutex);
            progress("inner fit " + std::to_string(n) + "/" + std::to_string(inner_metrics.size()));
        }
    });

    ResultsTable table;
    table.k = k;
    table.outer.resize(k);
    for (std::size_t o = 0; o < k; ++o) {
        auto& res = table.outer[o];
        res.fold = o;
        res.audit.outer_test = outer[o].test;
        for (std::size_t c = 0; c < configs.size(); ++c) {
            ScoredCandidate cand;
            cand.index = c;
            cand.params = configs[c];
            std::vector<double> nd, rn, gp;
            for (std::size_t f = 0; f < k; ++f) {
                const auto job = o * per_outer + c * k + f;
                const auto& m = inner_metrics[job];
                nd.push_back(m.ndcg);
                rn.push_back(m.one_minus_rnd);
                gp.push_back(m.one_minus_gpa);
                cand.metrics.k = m.k;
                const auto& a = job_audit[job];
                res.audit.normalizer_fit.insert(a.normalizer_fit.begin(), a.normalizer_fit.end());
                res.audit.pair_rows.insert(a.pair_rows.begin(), a.pair_rows.end());
                res.audit.selection_eval.insert(a.selection_eval.begin(), a.selection_eval.end());
            }
            cand.metrics.ndcg = summarize(nd).mean;
            cand.metrics.one_minus_rnd = summarize(rn).mean;
            cand.metrics.one_minus_gpa = summarize(gp).mean;
            res.candidates.push_back(cand);
        }
        res.selected_index = res.candidates[select_best(res.candidates)].index;
        res.selected = configs[res.selected_index];
    }

    detail::parallel_for(k, cfg.jobs, [&](std::size_t o) {
        auto& res = table.outer[o];
        FoldAudit final_audit;
        const auto outcome = fit_and_evaluate(ds, outer[o].train, outer[o].test, res.selected, cfg,
                                              derive_seed(cfg.seed, {401, o}), &final_audit);
        res.test_metrics = outcome.metrics;
        res.audit.normalizer_fit.insert(final_audit.normalizer_fit.begin(), final_audit.normalizer_fit.end());
        res.audit.pair_rows.insert(final_audit.pair_rows.begin(), final_audit.pair_rows.end());
    });

    ResultsRow row;
    row.dataset = cfg.dataset;
    row.model = "interpretable";
    row.folds = k;
    std::vector<double> nd, rn, gp;
    for (const auto& r : table.outer) {
        nd.push_back(r.test_metrics.ndcg);
        rn.push_back(r.test_metrics.one_minus_rnd);
        gp.push_back(r.test_metrics.one_minus_gpa);
    }
    row.ndcg = summarize(nd);
    row.one_minus_rnd = summarize(rn);
    row.one_minus_gpa = summarize(gp);
    table.rows.push_back(row);
    return table;
}

inline nlohmann::json ResultsTable::to_json() const {
    nlohmann::json j;
    j["k"] = k;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows) {
        auto ms = [](const MetricSummary& s) { return nlohmann::json{{"mean", s.mean}, {"std", s.std}}; };
        j["rows"].push_back({{"dataset", r.dataset},
                             {"model", r.model},
                             {"folds", r.folds},
                             {"ndcg_at_k", ms(r.ndcg)},
                             {"one_minus_rnd", ms(r.one_minus_rnd)},
                             {"one_minus_gpa", ms(r.one_minus_gpa)}});
    }
    j["outer_folds"] = nlohmann::json::array();
    for (const auto& o : outer) {
        nlohmann::json cands = nlohmann::json::array();
        for (const auto& c : o.candidates) {
            cands.push_back({{"index", c.index}, {"params", c.params.to_json()},
                             {"inner_mean_metrics", c.metrics.to_json()},
                             {"selection_score", c.metrics.mean()}});
        }
        j["outer_folds"].push_back({{"fold", o.fold},
                                    {"selected_index", o.selected_index},
                                    {"selected", o.selected.to_json()},
                                    {"test_metrics", o.test_metrics.to_json()},
                                    {"test_rows", o.audit.outer_test.size()},
                                    {"candidates", cands}});
    }
    return j;
}

inline std::string ResultsTable::to_csv() const {
    std::string out = "dataset,model,fold,depth,gamma,learning_rate," + MetricsRecord::csv_header() + "\n";
    for (const auto& r : rows) {
        for (const auto& o : outer) {
            out += r.dataset + "," + r.model + "," + std::to_string(o.fold) + "," +
                   std::to_string(o.selected.depth) + "," + format_double(o.selected.gamma) + "," +
                   format_double(o.selected.learning_rate) + "," + o.test_metrics.csv_row() + "\n";
        }
        const std::string kk = outer.empty() ? "" : std::to_string(outer.front().test_metrics.k);
        out += r.dataset + "," + r.model + ",mean,,,," + format_double(r.ndcg.mean) + "," + kk + "," +
               format_double(r.one_minus_rnd.mean) + "," + format_double(r.one_minus_gpa.mean) + "\n";
        out += r.dataset + "," + r.model + ",std,,,," + format_double(r.ndcg.std) + "," + kk + "," +
               format_double(r.one_minus_rnd.std) + "," + format_double(r.one_minus_gpa.std) + "\n";
    }
    return out;
}

}  // namespace fairrep
