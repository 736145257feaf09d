#pragma once

// Correction-vector architecture.
//
//   x --extractor--> w          (w has the width of x)
//   z = x + w                   (parameter-free sum / skip connection)
//   ranker(z_hi - z_lo) -> o    (bias-free, odd activations: antisymmetric)
//   z --reversal(-gamma)--> adversary -> P(s = 1 | z)
//
// The extractor is trained on the ranking loss minus gamma times the
// adversary loss; the adversary is trained to predict the sensitive group.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairrep/dataset.hpp"
#include "fairrep/error.hpp"
#include "fairrep/neural_core.hpp"
#include "fairrep/normalizer.hpp"

namespace fairrep {

struct ModelConfig {
    std::size_t input_width = 0;
    /// Hidden extractor layer widths; 0 entries mean "same as input width".
    std::vector<std::size_t> extractor_hidden = {0};
    Activation hidden_activation = Activation::tanh;
    NormalizerKind normalizer_kind = NormalizerKind::standard;
    /// Requested correction activation; sigmoid becomes centered_sigmoid under min-max.
    Activation final_activation = Activation::tanh;
    bool use_adversary = true;
    /// Adversary hidden width; 0 means input width.
    std::size_t adversary_hidden = 0;
    /// Hidden widths of the bias-free ranking head; empty = one linear unit.
    std::vector<std::size_t> ranker_hidden = {};
    double gamma = 1.0;
};

/// Pairs of normalized rows plus the group of each member.
struct PairBatch {
    Matrix x_hi;
    Matrix x_lo;
    std::vector<int> s_hi;
    std::vector<int> s_lo;

    std::size_t size() const { return static_cast<std::size_t>(x_hi.rows()); }
};

struct ModelGradients {
    Gradients extractor;
    Gradients adversary;
    Gradients ranker;
    double rank_loss = 0.0;
    double adv_loss = 0.0;
};

struct StepLosses {
    double rank_loss = 0.0;
    double adv_loss = 0.0;
};

class CorrectionModel {
public:
    CorrectionModel() = default;

    CorrectionModel(Mlp extractor, Mlp adversary, Mlp ranker, double gamma,
                    NormalizerKind kind)
        : extractor_(std::move(extractor)), adversary_(std::move(adversary)),
          ranker_(std::move(ranker)), gamma_(gamma), kind_(kind) {
        validate();
    }

    /// Glorot-initialized model. The correction layer starts at zero, so an
    /// untrained model applies no correction. Each sub-network draws from its
    /// own seed stream.
    static CorrectionModel create(const ModelConfig& cfg, std::uint64_t seed) {
        const std::size_t d = cfg.input_width;
        if (d == 0) throw ConfigError("model input width must be positive");
        const Activation final_act = correction_activation(cfg.normalizer_kind, cfg.final_activation);

        Rng ext_rng(derive_seed(seed, {1}));
        std::vector<DenseLayer> ext;
        std::size_t prev = d;
        for (auto w : cfg.extractor_hidden) {
            const std::size_t width = w == 0 ? d : w;
            ext.push_back(make_glorot_layer(prev, width, cfg.hidden_activation, true, ext_rng));
            prev = width;
        }
        ext.push_back(make_zero_layer(prev, d, final_act, true));

        std::vector<DenseLayer> adv;
        if (cfg.use_adversary) {
            Rng adv_rng(derive_seed(seed, {2}));
            const std::size_t h = cfg.adversary_hidden == 0 ? d : cfg.adversary_hidden;
            adv.push_back(make_glorot_layer(d, h, Activation::tanh, true, adv_rng));
            adv.push_back(make_glorot_layer(h, 1, Activation::sigmoid, true, adv_rng));
        }

        Rng rank_rng(derive_seed(seed, {3}));
        std::vector<DenseLayer> rank;
        prev = d;
        for (auto w : cfg.ranker_hidden) {
            const std::size_t width = w == 0 ? d : w;
            rank.push_back(make_glorot_layer(prev, width, Activation::tanh, false, rank_rng));
            prev = width;
        }
        rank.push_back(make_glorot_layer(prev, 1, Activation::tanh, false, rank_rng));

        return CorrectionModel(Mlp(std::move(ext), "extractor"), Mlp(std::move(adv), "adversary"),
                               Mlp(std::move(rank), "ranker"), cfg.gamma, cfg.normalizer_kind);
    }

    Mlp& extractor() { return extractor_; }
    const Mlp& extractor() const { return extractor_; }
    Mlp& adversary() { return adversary_; }
    const Mlp& adversary() const { return adversary_; }
    Mlp& ranker() { return ranker_; }
    const Mlp& ranker() const { return ranker_; }
    double gamma() const { return gamma_; }
    void set_gamma(double g) {
        if (!std::isfinite(g) || g < 0.0) throw ConfigError("gamma must be finite and >= 0");
        gamma_ = g;
    }
    NormalizerKind normalizer_kind() const { return kind_; }
    std::size_t input_width() const { return extractor_.in_dim(); }
    bool has_adversary() const { return !adversary_.empty(); }
    Activation correction_activation_kind() const { return extractor_.layers().back().activation; }

    /// w = extractor(x)
    Matrix compute_correction(const Matrix& x) const {
        check_width(x.cols(), "compute_correction");
        return extractor_.forward(x);
    }

    /// z = x + w
    Matrix correct(const Matrix& x) const { return x + compute_correction(x); }

    /// ranker(correct(x_hi) - correct(x_lo)), one value per row in (-1, 1).
    Vector rank_pairs(const Matrix& x_hi, const Matrix& x_lo) const {
        check_width(x_hi.cols(), "rank_pair");
        check_width(x_lo.cols(), "rank_pair");
        if (x_hi.rows() != x_lo.rows()) throw DimensionError("rank_pair: batch sizes differ");
        const Matrix diff = correct(x_hi) - correct(x_lo);
        return ranker_.forward(diff).col(0);
    }

    double rank_pair(const Vector& x_hi, const Vector& x_lo) const {
        return rank_pairs(x_hi.transpose(), x_lo.transpose())(0);
    }

    /// Per-item ranking score: the ranker's output logit for
    /// correct(x) - correct(0). For a single bias-free linear head the score
    /// order agrees with the sign of rank_pair.
    Vector score(const Matrix& x) const {
        check_width(x.cols(), "score");
        const Matrix ref = correct(Matrix::Zero(1, x.cols()));
        Matrix diff = correct(x);
        diff.rowwise() -= ref.row(0);
        return ranker_.forward_logits(diff).col(0);
    }

    /// Estimated P(s = 1 | z).
    Vector adversary_predict(const Matrix& z) const {
        if (!has_adversary()) throw ConfigError("model has no adversary head");
        check_width(z.cols(), "adversary_predict");
        return adversary_.forward(z).col(0);
    }

    void validate() const {
        const std::size_t d = extractor_.in_dim();
        if (extractor_.empty() || extractor_.out_dim() != d) {
            throw DimensionError("extractor output width " + std::to_string(extractor_.out_dim()) +
                                 " must equal input width " + std::to_string(d));
        }
        check_compatibility(kind_, correction_activation_kind() == Activation::centered_sigmoid
                                       ? Activation::sigmoid
                                       : correction_activation_kind());
        if (ranker_.empty() || ranker_.in_dim() != d || ranker_.out_dim() != 1) {
            throw DimensionError("ranker must map width " + std::to_string(d) + " to one output");
        }
        for (const auto& l : ranker_.layers()) {
            if (l.has_bias || !l.biases.isZero(0.0) || !is_odd(l.activation)) {
                throw ConfigError("ranker layers must be bias-free with odd activations");
            }
        }
        if (has_adversary()) {
            if (adversary_.in_dim() != d || adversary_.out_dim() != 1 ||
                adversary_.layers().back().activation != Activation::sigmoid) {
                throw DimensionError("adversary must map width " + std::to_string(d) +
                                     " to one sigmoid output");
            }
        }
        if (!std::isfinite(gamma_) || gamma_ < 0.0) throw ConfigError("gamma must be >= 0");
    }

private:
    void check_width(Eigen::Index w, const char* op) const {
        if (static_cast<std::size_t>(w) != input_width()) {
            throw DimensionError(std::string(op) + ": model expects width " +
                                 std::to_string(input_width()) + ", got " + std::to_string(w));
        }
    }

    Mlp extractor_;
    Mlp adversary_;
    Mlp ranker_;
    double gamma_ = 1.0;
    NormalizerKind kind_ = NormalizerKind::standard;
};

inline double softplus(double a) { return std::max(a, 0.0) + std::log1p(std::exp(-std::abs(a))); }

/// Mean of (1 - o)^2 over the pairs.
inline double ranking_loss(const CorrectionModel& m, const PairBatch& b) {
    const Vector o = m.rank_pairs(b.x_hi, b.x_lo);
    return (1.0 - o.array()).square().mean();
}

/// Mean binary cross-entropy of the adversary over both members of every pair.
inline double adversary_loss(const CorrectionModel& m, const PairBatch& b) {
    if (!m.has_adversary()) return 0.0;
    double total = 0.0;
    auto side = [&](const Matrix& x, const std::vector<int>& s) {
        const Matrix logits = m.adversary().forward_logits(m.correct(x));
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            total += softplus(logits(i, 0)) - s[static_cast<std::size_t>(i)] * logits(i, 0);
        }
    };
    side(b.x_hi, b.s_hi);
    side(b.x_lo, b.s_lo);
    return total / (2.0 * static_cast<double>(b.size()));
}

/// Exact gradients for one batch:
///   ranker    <- d rank_loss
///   adversary <- d adv_loss
///   extractor <- d rank_loss - gamma * d adv_loss (reversal at z)
inline ModelGradients compute_gradients(const CorrectionModel& m, const PairBatch& b) {
    const std::size_t n = b.size();
    if (n == 0) throw DataError("empty pair batch");
    if (b.x_lo.rows() != b.x_hi.rows() || b.s_hi.size() != n || b.s_lo.size() != n) {
        throw DimensionError("pair batch members have inconsistent sizes");
    }
    const Eigen::Index bn = static_cast<Eigen::Index>(n);
    const Eigen::Index d = static_cast<Eigen::Index>(m.input_width());
    if (b.x_hi.cols() != d || b.x_lo.cols() != d) {
        throw DimensionError("pair batch width " + std::to_string(b.x_hi.cols()) +
                             " does not match model width " + std::to_string(d));
    }

    Matrix x(2 * bn, d);
    x.topRows(bn) = b.x_hi;
    x.bottomRows(bn) = b.x_lo;

    Mlp::Trace ext_trace;
    const Matrix w = m.extractor().forward(x, &ext_trace);
    const Matrix z = x + w;

    // ranking head on the difference
    const Matrix diff = z.topRows(bn) - z.bottomRows(bn);
    Mlp::Trace rank_trace;
    const Matrix o = m.ranker().forward(diff, &rank_trace);
    ModelGradients g;
    const auto residual = (1.0 - o.array()).matrix();
    g.rank_loss = residual.array().square().mean();
    const Matrix d_o = (-2.0 / static_cast<double>(n)) * residual;
    const BackwardResult rank_back = m.ranker().backward(rank_trace, d_o, g.ranker);

    Matrix dz(2 * bn, d);
    dz.topRows(bn) = rank_back.input_gradient;
    dz.bottomRows(bn) = -rank_back.input_gradient;

    if (m.has_adversary()) {
        Mlp::Trace adv_trace;
        const Matrix& z_adv = grad_reverse_forward(z);
        m.adversary().forward(z_adv, &adv_trace);
        const Matrix& logits = adv_trace.caches.back().pre;
        Matrix d_logit(2 * bn, 1);
        double loss = 0.0;
        const double scale = 1.0 / (2.0 * static_cast<double>(n));
        for (Eigen::Index i = 0; i < 2 * bn; ++i) {
            const auto idx = static_cast<std::size_t>(i);
            const int s = i < bn ? b.s_hi[idx] : b.s_lo[idx - n];
            const double a = logits(i, 0);
            loss += softplus(a) - s * a;
            d_logit(i, 0) = (logistic(a) - s) * scale;
        }
        g.adv_loss = loss * scale;
        const BackwardResult adv_back = m.adversary().backward(adv_trace, d_logit, g.adversary, true);
        dz += grad_reverse(adv_back.input_gradient, m.gamma());
    }

    // z = x + w, so the gradient w.r.t. w equals the gradient w.r.t. z
    m.extractor().backward(ext_trace, dz, g.extractor);
    if (!std::isfinite(g.rank_loss) || !std::isfinite(g.adv_loss)) {
        throw TrainingError("non-finite loss (rank " + std::to_string(g.rank_loss) + ", adversary " +
                            std::to_string(g.adv_loss) + "); the learning rate is likely too high");
    }
    return g;
}

/// One SGD update of all three parameter groups from a single batch.
inline StepLosses training_step(CorrectionModel& m, const PairBatch& b, double lr) {
    const ModelGradients g = compute_gradients(m, b);
    sgd_step(m.extractor(), g.extractor, lr);
    sgd_step(m.ranker(), g.ranker, lr);
    if (m.has_adversary()) sgd_step(m.adversary(), g.adversary, lr);
    for (const auto* net : {&m.extractor(), &m.ranker(), &m.adversary()}) {
        for (const auto& l : net->layers()) {
            if (!is_finite(l)) {
                throw TrainingError("non-finite parameters after SGD step; lower the learning rate");
            }
        }
    }
    return {g.rank_loss, g.adv_loss};
}

inline StepLosses training_step(CorrectionModel& m, const PairBatch& b, double lr, double gamma) {
    m.set_gamma(gamma);
    return training_step(m, b, lr);
}

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 64;
    double learning_rate = 0.01;
    std::size_t max_pairs = 100000;
    std::uint64_t seed = 0;
};

/// Mean losses per epoch.
struct LossHistory {
    std::vector<StepLosses> epochs;
};

inline PairBatch gather_batch(const Matrix& x, std::span<const int> group, const PairSet& pairs,
                              std::span<const std::size_t> order, std::size_t begin,
                              std::size_t end) {
    PairBatch b;
    const auto n = static_cast<Eigen::Index>(end - begin);
    b.x_hi.resize(n, x.cols());
    b.x_lo.resize(n, x.cols());
    b.s_hi.resize(end - begin);
    b.s_lo.resize(end - begin);
    for (std::size_t k = begin; k < end; ++k) {
        const Pair& p = pairs[order[k]];
        const auto r = static_cast<Eigen::Index>(k - begin);
        b.x_hi.row(r) = x.row(static_cast<Eigen::Index>(p.hi));
        b.x_lo.row(r) = x.row(static_cast<Eigen::Index>(p.lo));
        b.s_hi[k - begin] = group[p.hi];
        b.s_lo[k - begin] = group[p.lo];
    }
    return b;
}

/// SGD over shuffled mini-batches of relevance pairs drawn from the training
/// rows. `x` must already be normalized. Deterministic for a fixed seed.
inline LossHistory fit(CorrectionModel& m, const Matrix& x, std::span<const int> relevance,
                       std::span<const int> group, const TrainConfig& cfg) {
    if (static_cast<std::size_t>(x.rows()) != relevance.size() || relevance.size() != group.size()) {
        throw DimensionError("fit: feature rows, relevance and group lengths differ");
    }
    if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");
    LossHistory history;
    if (cfg.epochs == 0) return history;
    const PairSet pairs = make_pairs(relevance, cfg.max_pairs, derive_seed(cfg.seed, {11}));
    if (pairs.empty()) return history;
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(cfg.seed, {12}));
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        StepLosses sum;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            const auto losses =
                training_step(m, gather_batch(x, group, pairs, order, begin, end), cfg.learning_rate);
            sum.rank_loss += losses.rank_loss;
            sum.adv_loss += losses.adv_loss;
            ++batches;
        }
        history.epochs.push_back({sum.rank_loss / static_cast<double>(batches),
                                  sum.adv_loss / static_cast<double>(batches)});
    }
    return history;
}

inline LossHistory fit(CorrectionModel& m, const Dataset& train, const Normalizer& n,
                       const TrainConfig& cfg) {
    if (n.kind() != m.normalizer_kind()) {
        throw ConfigError("normalizer kind does not match the model's normalization coupling");
    }
    return fit(m, n.transform(train.features), train.relevance, train.group, cfg);
}

/// Ranking scores for raw rows.
inline Vector score_raw(const CorrectionModel& m, const Normalizer& n, const Matrix& raw) {
    return m.score(n.transform(raw));
}

// ---------------------------------------------------------------------------
// Correction report

struct FeatureGroupStats {
    double mean_original = 0.0;
    double mean_corrected = 0.0;
    double mean_correction = 0.0;
    double percent_change = 0.0;  // 100 * mean_correction / mean_original
};

struct FeatureCorrection {
    std::string feature;
    FeatureGroupStats group[2];
    double difference_original = 0.0;   // |mean_original(1) - mean_original(0)|
    double difference_corrected = 0.0;  // |mean_corrected(1) - mean_corrected(0)|
    double difference_percent_change = 0.0;
};

struct CorrectionReport {
    std::pair<std::string, std::string> group_names;
    std::vector<FeatureCorrection> features;

    const FeatureCorrection& feature(const std::string& name) const {
        for (const auto& f : features) {
            if (f.feature == name) return f;
        }
        throw DataError("correction report has no feature '" + name + "'");
    }

    std::string to_csv() const;
    std::string to_table() const;
};

inline double percent_of(double delta, double base) {
    if (base == 0.0) return delta == 0.0 ? 0.0 : std::numeric_limits<double>::quiet_NaN();
    return 100.0 * delta / base;
}

/// Per feature and group: mean raw value, mean of g^-1(z), mean raw correction
/// g^-1(z) - x_raw and its percentage of the original mean.
inline CorrectionReport explain(const CorrectionModel& m, const Dataset& ds, const Normalizer& n) {
    const Matrix x = n.transform(ds.features);
    const Matrix z = m.correct(x);
    const Matrix corrected = n.inverse_transform(z);
    const Matrix delta = n.raw_correction(ds.features, z);
    CorrectionReport report;
    report.group_names = ds.group_names;
    std::size_t count[2] = {0, 0};
    for (int g : ds.group) ++count[g];
    if (count[0] == 0 || count[1] == 0) throw DataError("explain: both groups must be present");
    for (std::size_t j = 0; j < ds.width(); ++j) {
        const auto c = static_cast<Eigen::Index>(j);
        FeatureCorrection fc;
        fc.feature = ds.feature_names[j];
        double sums[2][3] = {{0, 0, 0}, {0, 0, 0}};
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            auto& s = sums[ds.group[i]];
            s[0] += ds.features(r, c);
            s[1] += corrected(r, c);
            s[2] += delta(r, c);
        }
        for (int g = 0; g < 2; ++g) {
            const double cnt = static_cast<double>(count[g]);
            auto& st = fc.group[g];
            st.mean_original = sums[g][0] / cnt;
            st.mean_corrected = sums[g][1] / cnt;
            st.mean_correction = sums[g][2] / cnt;
            st.percent_change = percent_of(st.mean_correction, st.mean_original);
        }
        fc.difference_original = std::abs(fc.group[1].mean_original - fc.group[0].mean_original);
        fc.difference_corrected = std::abs(fc.group[1].mean_corrected - fc.group[0].mean_corrected);
        fc.difference_percent_change =
            percent_of(fc.difference_corrected - fc.difference_original, fc.difference_original);
        report.features.push_back(std::move(fc));
    }
    return report;
}

inline std::string CorrectionReport::to_csv() const {
    std::string out =
        "feature,group,mean_original,mean_corrected,mean_correction,percent_change\n";
    auto num = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.6f", v);
        return std::string(buf);
    };
    const std::string names[2] = {group_names.first, group_names.second};
    for (const auto& f : features) {
        for (int g = 0; g < 2; ++g) {
            const auto& s = f.group[g];
            out += csv::escape(f.feature) + "," + csv::escape(names[g]) + "," +
                   num(s.mean_original) + "," + num(s.mean_corrected) + "," +
                   num(s.mean_correction) + "," + num(s.percent_change) + "\n";
        }
        out += csv::escape(f.feature) + ",difference," + num(f.difference_original) + "," +
               num(f.difference_corrected) + "," +
               num(f.difference_corrected - f.difference_original) + "," +
               num(f.difference_percent_change) + "\n";
    }
    return out;
}

inline std::string CorrectionReport::to_table() const {
    std::size_t wname = 7;
    for (const auto& f : features) wname = std::max(wname, f.feature.size());
    auto cell = [](double v, double pct) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6f (%+.1f%%)", v, pct);
        return std::string(buf);
    };
    auto plain = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6f", v);
        return std::string(buf);
    };
    auto pad = [](std::string s, std::size_t w) {
        if (s.size() < w) s.append(w - s.size(), ' ');
        return s;
    };
    const std::size_t wc = 22;
    std::string out = pad("feature", wname) + " | " + pad("row", 9) + " | " +
                      pad(group_names.second, wc) + " | " + pad(group_names.first, wc) + " | " +
                      "difference\n";
    out += std::string(wname + 3 + 9 + 3 + wc + 3 + wc + 3 + 22, '-') + "\n";
    for (const auto& f : features) {
        out += pad(f.feature, wname) + " | " + pad("original", 9) + " | " +
               pad(plain(f.group[1].mean_original), wc) + " | " +
               pad(plain(f.group[0].mean_original), wc) + " | " + plain(f.difference_original) +
               "\n";
        out += pad("", wname) + " | " + pad("corrected", 9) + " | " +
               pad(cell(f.group[1].mean_corrected, f.group[1].percent_change), wc) + " | " +
               pad(cell(f.group[0].mean_corrected, f.group[0].percent_change), wc) + " | " +
               cell(f.difference_corrected, f.difference_percent_change) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Post-hoc probe

/// Fraction of rows predicted correctly by a freshly trained one-hidden-layer
/// classifier of s from `z_train`, evaluated on `z_test`.
inline double posthoc_adversary_accuracy(const Matrix& z_train, std::span<const int> s_train,
                                         const Matrix& z_test, std::span<const int> s_test,
                                         std::uint64_t seed, std::size_t epochs = 30,
                                         double lr = 0.05, std::size_t batch = 32) {
    const auto d = static_cast<std::size_t>(z_train.cols());
    Rng rng(seed);
    Mlp net({make_glorot_layer(d, std::max<std::size_t>(d, 4), Activation::tanh, true, rng),
             make_glorot_layer(std::max<std::size_t>(d, 4), 1, Activation::sigmoid, true, rng)},
            "probe");
    std::vector<std::size_t> order(static_cast<std::size_t>(z_train.rows()));
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t e = 0; e < epochs; ++e) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t b0 = 0; b0 < order.size(); b0 += batch) {
            const std::size_t b1 = std::min(order.size(), b0 + batch);
            Matrix xb(static_cast<Eigen::Index>(b1 - b0), z_train.cols());
            for (std::size_t k = b0; k < b1; ++k) {
                xb.row(static_cast<Eigen::Index>(k - b0)) =
                    z_train.row(static_cast<Eigen::Index>(order[k]));
            }
            Mlp::Trace tr;
            net.forward(xb, &tr);
            Matrix dl(xb.rows(), 1);
            for (Eigen::Index i = 0; i < xb.rows(); ++i) {
                const double a = tr.caches.back().pre(i, 0);
                dl(i, 0) = (logistic(a) - s_train[order[b0 + static_cast<std::size_t>(i)]]) /
                           static_cast<double>(xb.rows());
            }
            Gradients g;
            net.backward(tr, dl, g, true);
            sgd_step(net, g, lr);
        }
    }
    const Matrix p = net.forward(z_test);
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const int pred = p(i, 0) >= 0.5 ? 1 : 0;
        correct += pred == s_test[static_cast<std::size_t>(i)];
    }
    return static_cast<double>(correct) / static_cast<double>(p.rows());
}

// ---------------------------------------------------------------------------
// Persistence

namespace detail {

inline nlohmann::json layers_to_json(const Mlp& net) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& l : net.layers()) {
        arr.push_back({{"in", l.in_dim()},
                       {"out", l.out_dim()},
                       {"activation", std::string(to_string(l.activation))},
                       {"has_bias", l.has_bias},
                       {"weights", std::vector<double>(l.weights.data(),
                                                       l.weights.data() + l.weights.size())},
                       {"biases", std::vector<double>(l.biases.data(),
                                                      l.biases.data() + l.biases.size())}});
    }
    return arr;
}

inline Mlp layers_from_json(const nlohmann::json& arr, const std::string& name) {
    std::vector<DenseLayer> layers;
    for (const auto& j : arr) {
        const auto in = j.at("in").get<std::size_t>();
        const auto out = j.at("out").get<std::size_t>();
        DenseLayer l = make_zero_layer(in, out, parse_activation(j.at("activation").get<std::string>()),
                                       j.at("has_bias").get<bool>());
        const auto w = j.at("weights").get<std::vector<double>>();
        const auto b = j.at("biases").get<std::vector<double>>();
        if (w.size() != in * out || b.size() != out) {
            throw DataError(name + ": parameter array sizes do not match declared dims " +
                            std::to_string(out) + "x" + std::to_string(in));
        }
        std::copy(w.begin(), w.end(), l.weights.data());
        std::copy(b.begin(), b.end(), l.biases.data());
        if (!is_finite(l)) throw DataError(name + ": non-finite parameter values");
        layers.push_back(std::move(l));
    }
    return Mlp(std::move(layers), name);
}

}  // namespace detail

inline constexpr int kModelFormatVersion = 1;

/// Trained model, its normalizer and free-form metadata, stored as one JSON file.
struct ModelArtifact {
    CorrectionModel model;
    Normalizer normalizer;
    nlohmann::json metadata = nlohmann::json::object();

    nlohmann::json to_json() const {
        return {{"format", "fairrep-model"},
                {"version", kModelFormatVersion},
                {"gamma", model.gamma()},
                {"normalizer_kind", std::string(to_string(model.normalizer_kind()))},
                {"correction_activation", std::string(to_string(model.correction_activation_kind()))},
                {"normalizer", normalizer.to_json()},
                {"extractor", detail::layers_to_json(model.extractor())},
                {"adversary", detail::layers_to_json(model.adversary())},
                {"ranker", detail::layers_to_json(model.ranker())},
                {"metadata", metadata}};
    }

    static ModelArtifact from_json(const nlohmann::json& j) {
        try {
            if (j.at("format").get<std::string>() != "fairrep-model") {
                throw DataError("not a fairrep model file");
            }
            if (j.at("version").get<int>() != kModelFormatVersion) {
                throw DataError("unsupported model format version " +
                                std::to_string(j.at("version").get<int>()));
            }
            ModelArtifact a;
            a.normalizer = Normalizer::from_json(j.at("normalizer"));
            a.model = CorrectionModel(detail::layers_from_json(j.at("extractor"), "extractor"),
                                      detail::layers_from_json(j.at("adversary"), "adversary"),
                                      detail::layers_from_json(j.at("ranker"), "ranker"),
                                      j.at("gamma").get<double>(),
                                      parse_normalizer_kind(j.at("normalizer_kind").get<std::string>()));
            a.metadata = j.value("metadata", nlohmann::json::object());
            if (a.normalizer.width() != a.model.input_width()) {
                throw DataError("normalizer width does not match model input width");
            }
            return a;
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("malformed model JSON: ") + e.what());
        }
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw DataError("cannot write model file '" + path + "'");
        out << to_json().dump(1) << "\n";
    }

    static ModelArtifact load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open model file '" + path + "'");
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw DataError("model file '" + path + "' is not valid JSON: " + e.what());
        }
        return from_json(j);
    }
};

}  // namespace fairrep
