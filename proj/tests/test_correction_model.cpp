#include <gtest/gtest.h>

#include <cstring>

#include "fairrep/correction_model.hpp"
#include "test_support.hpp"

using namespace fairrep;
using fairrep::testing::random_matrix;
using fairrep::testing::randomize;
using fairrep::testing::synthetic_dataset;

namespace {

ModelConfig config(std::size_t d, bool adversary = true, double gamma = 1.0) {
    ModelConfig c;
    c.input_width = d;
    c.use_adversary = adversary;
    c.gamma = gamma;
    return c;
}

PairBatch toy_batch(Rng& rng, std::size_t n, std::size_t d) {
    PairBatch b;
    b.x_hi = random_matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d), rng);
    b.x_lo = random_matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d), rng);
    std::bernoulli_distribution coin(0.5);
    for (std::size_t i = 0; i < n; ++i) {
        b.s_hi.push_back(coin(rng));
        b.s_lo.push_back(coin(rng));
    }
    return b;
}

bool bitwise_equal(const Mlp& a, const Mlp& b) {
    if (a.layers().size() != b.layers().size()) return false;
    for (std::size_t i = 0; i < a.layers().size(); ++i) {
        const auto& la = a.layers()[i];
        const auto& lb = b.layers()[i];
        if (la.weights.size() != lb.weights.size()) return false;
        if (std::memcmp(la.weights.data(), lb.weights.data(), sizeof(double) * la.weights.size()) != 0) return false;
        if (std::memcmp(la.biases.data(), lb.biases.data(), sizeof(double) * la.biases.size()) != 0) return false;
    }
    return true;
}

}  // namespace

TEST(Create, ZeroInitIsIdentity) {
    Rng rng(1);
    const auto m = CorrectionModel::create(config(5), 3);
    const Matrix x = random_matrix(10, 5, rng, -3, 3);
    EXPECT_TRUE(m.compute_correction(x).isZero(0.0));
    EXPECT_EQ(m.correct(x), x);
}

TEST(Create, ShapesAndValidation) {
    ModelConfig c = config(4);
    c.extractor_hidden = {0, 7};
    c.ranker_hidden = {3};
    const auto m = CorrectionModel::create(c, 0);
    EXPECT_EQ(m.extractor().layers().size(), 3u);
    EXPECT_EQ(m.extractor().layers()[1].out_dim(), 7u);
    EXPECT_EQ(m.extractor().out_dim(), 4u);
    EXPECT_EQ(m.adversary().layers()[0].out_dim(), 4u);
    for (const auto& l : m.ranker().layers()) EXPECT_FALSE(l.has_bias);
    EXPECT_THROW(CorrectionModel::create(config(0), 0), ConfigError);
    ModelConfig bad = config(3);
    bad.final_activation = Activation::relu;
    EXPECT_THROW(CorrectionModel::create(bad, 0), ConfigError);
}

TEST(Create, MinmaxSigmoidUsesCenteredActivation) {
    ModelConfig c = config(3);
    c.normalizer_kind = NormalizerKind::minmax;
    c.final_activation = Activation::sigmoid;
    EXPECT_EQ(CorrectionModel::create(c, 0).correction_activation_kind(), Activation::centered_sigmoid);
}

TEST(Correction, ConstantBiasGivesExactShift) {
    auto m = CorrectionModel::create(config(2), 0);
    auto& last = m.extractor().layers().back();
    last.weights.setZero();
    last.biases.setConstant(std::atanh(0.5));
    const Matrix x = Matrix::Constant(3, 2, 1.0);
    EXPECT_TRUE(m.compute_correction(x).isApprox(Matrix::Constant(3, 2, 0.5), 1e-15));
    EXPECT_TRUE(m.correct(x).isApprox(Matrix::Constant(3, 2, 1.5), 1e-15));
}

TEST(Correction, BoundedByFinalActivation) {
    Rng rng(2);
    for (auto kind : {NormalizerKind::standard, NormalizerKind::minmax}) {
        ModelConfig c = config(4);
        c.normalizer_kind = kind;
        c.final_activation = kind == NormalizerKind::minmax ? Activation::sigmoid : Activation::tanh;
        auto m = CorrectionModel::create(c, 9);
        randomize(m.extractor(), rng, 5.0);
        const Matrix w = m.compute_correction(random_matrix(200, 4, rng, -50, 50));
        EXPECT_LE(w.cwiseAbs().maxCoeff(), 1.0);
    }
}

TEST(Correction, WidthMismatch) {
    const auto m = CorrectionModel::create(config(3), 0);
    EXPECT_THROW(m.correct(Matrix::Zero(1, 4)), DimensionError);
    EXPECT_THROW(m.rank_pairs(Matrix::Zero(2, 3), Matrix::Zero(1, 3)), DimensionError);
}

TEST(RankPair, Antisymmetric) {
    Rng rng(3);
    ModelConfig c = config(5);
    c.ranker_hidden = {6};
    auto m = CorrectionModel::create(c, 1);
    randomize(m.extractor(), rng);
    for (auto& l : m.ranker().layers()) l.weights = random_matrix(l.weights.rows(), l.weights.cols(), rng);
    for (int t = 0; t < 100; ++t) {
        const Vector a = random_matrix(5, 1, rng, -2, 2).col(0);
        const Vector b = random_matrix(5, 1, rng, -2, 2).col(0);
        EXPECT_NEAR(m.rank_pair(a, b), -m.rank_pair(b, a), 1e-12);
        EXPECT_EQ(m.rank_pair(a, a), 0.0);
    }
}

TEST(RankPair, RejectsBiasedOrEvenRanker) {
    auto m = CorrectionModel::create(config(2), 0);
    Mlp biased({make_zero_layer(2, 1, Activation::tanh, true)}, "ranker");
    EXPECT_THROW(CorrectionModel(m.extractor(), m.adversary(), biased, 1.0, NormalizerKind::standard),
                 ConfigError);
    Mlp even({make_zero_layer(2, 1, Activation::sigmoid, false)}, "ranker");
    EXPECT_THROW(CorrectionModel(m.extractor(), m.adversary(), even, 1.0, NormalizerKind::standard),
                 ConfigError);
}

TEST(Score, SignAgreesWithLinearHead) {
    Rng rng(4);
    auto m = CorrectionModel::create(config(3), 2);
    randomize(m.extractor(), rng);
    const Matrix x = random_matrix(40, 3, rng, -2, 2);
    const Vector s = m.score(x);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.rows(); ++j) {
            if (i == j) continue;
            const double o = m.rank_pair(x.row(i).transpose(), x.row(j).transpose());
            if (std::abs(o) > 1e-9) {
                EXPECT_EQ(o > 0, s(i) > s(j));
            }
        }
    }
}

TEST(Adversary, ZeroWeightsPredictHalf) {
    auto m = CorrectionModel::create(config(3), 0);
    for (auto& l : m.adversary().layers()) {
        l.weights.setZero();
        l.biases.setZero();
    }
    Rng rng(5);
    const Vector p = m.adversary_predict(random_matrix(4, 3, rng));
    for (Eigen::Index i = 0; i < p.size(); ++i) EXPECT_EQ(p(i), 0.5);
    const auto no_adv = CorrectionModel::create(config(3, false), 0);
    EXPECT_THROW(no_adv.adversary_predict(Matrix::Zero(1, 3)), ConfigError);
}

// Every gradient of the full model against central differences of the
// forward-only losses.
class FullModelGradient : public ::testing::TestWithParam<double> {};

TEST_P(FullModelGradient, MatchesCentralDifferences) {
    const double gamma = GetParam();
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        Rng rng(100 + seed);
        ModelConfig c = config(2, true, gamma);
        c.extractor_hidden = {0, 3};
        auto m = CorrectionModel::create(c, seed);
        randomize(m.extractor(), rng);
        const PairBatch b = toy_batch(rng, 8, 2);
        const ModelGradients g = compute_gradients(m, b);

        EXPECT_NEAR(g.rank_loss, ranking_loss(m, b), 1e-12);
        EXPECT_NEAR(g.adv_loss, adversary_loss(m, b), 1e-12);

        auto rank = [&] { return ranking_loss(m, b); };
        auto adv = [&] { return adversary_loss(m, b); };
        auto ext_objective = [&] { return ranking_loss(m, b) - gamma * adversary_loss(m, b); };
        EXPECT_LT(fairrep::testing::max_gradient_error(m.ranker().layers(), g.ranker, rank), 1e-4);
        EXPECT_LT(fairrep::testing::max_gradient_error(m.adversary().layers(), g.adversary, adv), 1e-4);
        EXPECT_LT(fairrep::testing::max_gradient_error(m.extractor().layers(), g.extractor, ext_objective),
                  1e-4);
    }
}

INSTANTIATE_TEST_SUITE_P(Gammas, FullModelGradient, ::testing::Values(0.0, 0.7, 3.0));

TEST(Training, GammaZeroMatchesAdversaryFreeBitwise) {
    const auto ds = synthetic_dataset(120, 7);
    const auto n = Normalizer::fit(NormalizerKind::standard, ds.features);
    TrainConfig t;
    t.epochs = 5;
    t.batch_size = 16;
    t.learning_rate = 0.05;
    t.max_pairs = 500;
    t.seed = 3;
    auto with = CorrectionModel::create(config(ds.width(), true, 0.0), 42);
    auto without = CorrectionModel::create(config(ds.width(), false, 0.0), 42);
    fit(with, ds, n, t);
    fit(without, ds, n, t);
    EXPECT_TRUE(bitwise_equal(with.extractor(), without.extractor()));
    EXPECT_TRUE(bitwise_equal(with.ranker(), without.ranker()));
}

TEST(Training, ZeroEpochsLeavesModelUntouched) {
    const auto ds = synthetic_dataset(50, 1);
    const auto n = Normalizer::fit(NormalizerKind::standard, ds.features);
    auto m = CorrectionModel::create(config(ds.width()), 4);
    const auto before = m;
    TrainConfig t;
    t.epochs = 0;
    const auto h = fit(m, ds, n, t);
    EXPECT_TRUE(h.epochs.empty());
    EXPECT_TRUE(bitwise_equal(m.extractor(), before.extractor()));
    EXPECT_TRUE(bitwise_equal(m.ranker(), before.ranker()));
    EXPECT_TRUE(bitwise_equal(m.adversary(), before.adversary()));
}

TEST(Training, DeterministicForFixedSeeds) {
    const auto ds = synthetic_dataset(100, 2);
    const auto n = Normalizer::fit(NormalizerKind::standard, ds.features);
    TrainConfig t;
    t.epochs = 3;
    t.max_pairs = 400;
    t.learning_rate = 0.02;
    t.seed = 9;
    auto a = CorrectionModel::create(config(ds.width()), 1);
    auto b = CorrectionModel::create(config(ds.width()), 1);
    const auto ha = fit(a, ds, n, t);
    const auto hb = fit(b, ds, n, t);
    EXPECT_TRUE(bitwise_equal(a.extractor(), b.extractor()));
    EXPECT_TRUE(bitwise_equal(a.adversary(), b.adversary()));
    EXPECT_EQ(ha.epochs.back().rank_loss, hb.epochs.back().rank_loss);
}

TEST(Training, SingleStepOnLinearHeadMatchesHandUpdate) {
    // no adversary, one pair, linear correction path frozen at zero
    auto m = CorrectionModel::create(config(1, false), 0);
    m.ranker().layers()[0].weights(0, 0) = 0.0;
    PairBatch b;
    b.x_hi = Matrix::Constant(1, 1, 1.0);
    b.x_lo = Matrix::Constant(1, 1, 0.0);
    b.s_hi = {0};
    b.s_lo = {1};
    // o = tanh(0) = 0; dL/dv = -2 (1 - o) * (1 - o^2) * diff = -2
    training_step(m, b, 0.1);
    EXPECT_NEAR(m.ranker().layers()[0].weights(0, 0), 0.2, 1e-15);
}

TEST(Training, LearnsSyntheticRanking) {
    const auto train = synthetic_dataset(600, 11, 0.3, 2, false);
    const auto test = synthetic_dataset(400, 12, 0.3, 2, false);
    const auto n = Normalizer::fit(NormalizerKind::standard, train.features);
    auto m = CorrectionModel::create(config(train.width(), true, 0.5), 5);
    TrainConfig t;
    t.epochs = 10;
    t.learning_rate = 0.05;
    t.max_pairs = 5000;
    t.seed = 5;
    const auto h = fit(m, train, n, t);
    EXPECT_LT(h.epochs.back().rank_loss, h.epochs.front().rank_loss);
    const Vector s = score_raw(m, n, test.features);
    const auto r = evaluate(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())),
                            test.relevance, test.group, 50);
    EXPECT_GT(r.ndcg, 0.95);
}

TEST(Training, DivergenceIsReported) {
    const auto ds = synthetic_dataset(80, 3);
    const auto n = Normalizer::fit(NormalizerKind::standard, ds.features);
    auto m = CorrectionModel::create(config(ds.width()), 0);
    TrainConfig t;
    t.epochs = 1;
    t.max_pairs = 200;
    m.ranker().layers()[0].weights(0, 0) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(fit(m, ds, n, t), TrainingError);
}

TEST(Explain, UntrainedModelReportsZeroCorrections) {
    const auto ds = synthetic_dataset(60, 4);
    const auto n = Normalizer::fit(NormalizerKind::standard, ds.features, ds.feature_names);
    const auto m = CorrectionModel::create(config(ds.width()), 0);
    const auto r = explain(m, ds, n);
    ASSERT_EQ(r.features.size(), ds.width());
    for (const auto& f : r.features) {
        for (const auto& g : f.group) {
            EXPECT_NEAR(g.mean_correction, 0.0, 1e-12);
            EXPECT_NEAR(g.mean_corrected, g.mean_original, 1e-12);
        }
    }
}

TEST(Explain, ReportIdentities) {
    Rng rng(6);
    const auto ds = synthetic_dataset(80, 5);
    const auto n = Normalizer::fit(NormalizerKind::standard, ds.features, ds.feature_names);
    auto m = CorrectionModel::create(config(ds.width()), 0);
    randomize(m.extractor(), rng);
    const auto r = explain(m, ds, n);
    const auto means = group_feature_means(ds, "proxy");
    const auto& f = r.feature("proxy");
    EXPECT_NEAR(f.group[0].mean_original, means.group0, 1e-12);
    EXPECT_NEAR(f.group[1].mean_original, means.group1, 1e-12);
    for (const auto& g : f.group) {
        EXPECT_NEAR(g.mean_corrected - g.mean_original, g.mean_correction, 1e-12);
        EXPECT_NEAR(g.percent_change, 100.0 * g.mean_correction / g.mean_original, 1e-9);
    }
    EXPECT_NEAR(f.difference_original, means.difference, 1e-12);
    const std::string csv = r.to_csv();
    EXPECT_EQ(csv.rfind("feature,group,mean_original", 0), 0u);
    EXPECT_NE(r.to_table().find("proxy"), std::string::npos);
    EXPECT_THROW(r.feature("nope"), DataError);
}

TEST(Artifact, JsonRoundTripPreservesScores) {
    Rng rng(7);
    const auto ds = synthetic_dataset(30, 6);
    ModelArtifact a;
    a.normalizer = Normalizer::fit(NormalizerKind::standard, ds.features, ds.feature_names);
    a.model = CorrectionModel::create(config(ds.width(), true, 2.5), 3);
    randomize(a.model.extractor(), rng);
    a.metadata = {{"note", "x"}};
    const auto b = ModelArtifact::from_json(nlohmann::json::parse(a.to_json().dump()));
    EXPECT_EQ(b.model.gamma(), 2.5);
    EXPECT_EQ(b.metadata.at("note"), "x");
    const Vector sa = score_raw(a.model, a.normalizer, ds.features);
    const Vector sb = score_raw(b.model, b.normalizer, ds.features);
    EXPECT_EQ(sa, sb);
    EXPECT_EQ(b.to_json().dump(), a.to_json().dump());
}

TEST(Artifact, RejectsMalformedFiles) {
    EXPECT_THROW(ModelArtifact::from_json(nlohmann::json{{"format", "other"}}), DataError);
    EXPECT_THROW(ModelArtifact::from_json(nlohmann::json::object()), DataError);
    ModelArtifact a;
    a.normalizer = Normalizer::fit(NormalizerKind::standard, Matrix::Random(4, 2));
    a.model = CorrectionModel::create(config(2), 0);
    auto j = a.to_json();
    j["extractor"][0]["weights"].push_back(1.0);
    EXPECT_THROW(ModelArtifact::from_json(j), DataError);
    EXPECT_THROW(ModelArtifact::load("/nonexistent/model.json"), DataError);
}

TEST(Posthoc, DetectsAnObviousProxy) {
    const auto ds = synthetic_dataset(600, 8, 0.1);
    const auto n = Normalizer::fit(NormalizerKind::standard, ds.features);
    const Matrix z = n.transform(ds.features);
    const double acc = posthoc_adversary_accuracy(z.topRows(400), std::span(ds.group).first(400),
                                                  z.bottomRows(200), std::span(ds.group).subspan(400), 1);
    EXPECT_GT(acc, 0.95);
}
