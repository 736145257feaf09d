#include <gtest/gtest.h>

#include "fairrep/metrics.hpp"
#include "test_support.hpp"

using namespace fairrep;
using fairrep::testing::brute_gpa;
using fairrep::testing::brute_ndcg;
using fairrep::testing::brute_rnd;
using fairrep::testing::Item;

namespace {

/// Ranked list in the given order (scores strictly decreasing).
RankedList in_order(const std::vector<int>& rel, const std::vector<int>& grp) {
    std::vector<double> s(rel.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<double>(s.size() - i);
    return RankedList::from_scores(s, rel, grp);
}

struct RandomList {
    std::vector<double> scores;
    std::vector<int> rel;
    std::vector<int> grp;
};

RandomList random_list(Rng& rng, std::size_t max_len = 200) {
    std::uniform_int_distribution<std::size_t> len(20, max_len);
    std::uniform_int_distribution<int> levels(2, 6);
    const std::size_t n = len(rng);
    const int m = levels(rng);
    std::uniform_int_distribution<int> rel(0, m - 1);
    std::uniform_int_distribution<int> coarse(0, 15);  // forces score ties
    std::bernoulli_distribution coin(0.4);
    RandomList l;
    for (std::size_t i = 0; i < n; ++i) {
        l.scores.push_back(coarse(rng));
        l.rel.push_back(rel(rng));
        l.grp.push_back(coin(rng) ? 1 : 0);
    }
    return l;
}

}  // namespace

TEST(RankedList, SortsDescendingWithIndexTieBreak) {
    const std::vector<double> s = {1.0, 3.0, 3.0, 2.0};
    const std::vector<int> r = {0, 1, 2, 3}, g = {0, 1, 0, 1};
    const auto l = RankedList::from_scores(s, r, g);
    ASSERT_EQ(l.size(), 4u);
    EXPECT_EQ(l.items[0].index, 1u);
    EXPECT_EQ(l.items[1].index, 2u);
    EXPECT_EQ(l.items[2].index, 3u);
    EXPECT_EQ(l.items[3].index, 0u);
}

TEST(RankedList, RejectsBadInput) {
    const std::vector<double> s = {1.0, std::nan("")};
    const std::vector<int> r = {0, 1}, g = {0, 1};
    EXPECT_THROW(RankedList::from_scores(s, r, g), Error);
    const std::vector<int> short_g = {0};
    EXPECT_THROW(RankedList::from_scores(std::vector<double>{1, 2}, r, short_g), DimensionError);
}

TEST(Ndcg, PerfectOrderIsOne) {
    EXPECT_DOUBLE_EQ(ndcg_at_k(in_order({3, 2, 1, 0}, {0, 1, 0, 1}), 4), 1.0);
}

TEST(Ndcg, ReversedPairAtTwo) {
    // (2^3 - 1) / log2(3) over 2^3 - 1
    EXPECT_NEAR(ndcg_at_k(in_order({0, 3}, {0, 1}), 2), 1.0 / std::log2(3.0), 1e-15);
    EXPECT_NEAR(ndcg_at_k(in_order({0, 3}, {0, 1}), 2), 0.6309297535714575, 1e-15);
}

TEST(Ndcg, AllZeroRelevanceIsOne) {
    EXPECT_EQ(ndcg_at_k(in_order({0, 0, 0}, {0, 1, 0}), 2), 1.0);
}

TEST(Ndcg, CutoffBeyondLengthUsesWholeList) {
    const auto l = in_order({1, 0, 2}, {0, 1, 0});
    EXPECT_DOUBLE_EQ(ndcg_at_k(l, 3), ndcg_at_k(l, 100));
}

TEST(Rnd, AlternatingGroupsIsZero) {
    std::vector<int> g(20), r(20, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<int>(i % 2);
    EXPECT_NEAR(rnd(in_order(r, g), 10), 0.0, 1e-15);
}

TEST(Rnd, ProtectedFirstAndLastAreExtremes) {
    std::vector<int> first(30, 0), last(30, 0), r(30, 0);
    for (std::size_t i = 0; i < 10; ++i) {
        first[i] = 1;
        last[29 - i] = 1;
    }
    const double a = rnd(in_order(r, first), 10);
    const double b = rnd(in_order(r, last), 10);
    EXPECT_LE(a, 1.0 + 1e-15);
    EXPECT_LE(b, 1.0 + 1e-15);
    EXPECT_NEAR(std::max(a, b), 1.0, 1e-15);
}

TEST(Rnd, TooShortOrSingleGroupIsAnError) {
    EXPECT_THROW(rnd(in_order({0, 1}, {0, 1}), 10), DataError);
    EXPECT_THROW(rnd(in_order(std::vector<int>(10, 0), std::vector<int>(10, 1)), 10), DataError);
    EXPECT_THROW(rnd(in_order(std::vector<int>(10, 0), std::vector<int>(10, 1)), 1), ConfigError);
}

TEST(Gpa, SymmetricRankingIsZero) {
    // both directions perfectly ordered
    EXPECT_EQ(gpa(in_order({1, 1, 0, 0}, {0, 1, 0, 1})), 0.0);
}

TEST(Gpa, OneDirectionCorrectOtherWrong) {
    // group-0 high items above group-1 low ones, group-1 high items at the bottom
    const auto l = in_order({1, 0, 1}, {0, 1, 1});
    const auto acc = pairwise_accuracy(l);
    EXPECT_EQ(acc.pairs01, 1u);
    EXPECT_EQ(acc.a01, 1.0);
    EXPECT_EQ(acc.pairs10, 0u);
    EXPECT_THROW(gpa(l), DataError);

    const auto l2 = in_order({1, 0, 0, 1}, {0, 1, 0, 1});
    EXPECT_EQ(gpa(l2), 1.0);
}

TEST(Oracles, ThousandRandomListsMatchBruteForce) {
    Rng rng(2024);
    std::size_t checked_gpa = 0;
    for (int t = 0; t < 1000; ++t) {
        const auto l = random_list(rng);
        const auto ranked = RankedList::from_scores(l.scores, l.rel, l.grp);
        std::vector<int> rr, gg;
        std::vector<Item> items;
        for (const auto& it : ranked.items) {
            rr.push_back(it.relevance);
            gg.push_back(it.group);
            items.push_back({it.relevance, it.group});
        }
        for (std::size_t k : {std::size_t{1}, std::size_t{10}, std::size_t{50}, rr.size()}) {
            EXPECT_NEAR(ndcg_at_k(ranked, k), brute_ndcg(rr, k), 1e-12);
        }
        const std::size_t protected_count = std::count(gg.begin(), gg.end(), 1);
        if (protected_count > 0 && protected_count < gg.size()) {
            EXPECT_NEAR(rnd(ranked, 10), brute_rnd(gg, 10), 1e-12);
        }
        const auto acc = pairwise_accuracy(ranked);
        if (acc.pairs01 > 0 && acc.pairs10 > 0) {
            EXPECT_NEAR(gpa(ranked), brute_gpa(items), 1e-12);
            ++checked_gpa;
        }
    }
    EXPECT_GT(checked_gpa, 900u);
}

TEST(Invariance, StrictlyMonotoneScoreTransform) {
    Rng rng(5);
    for (int t = 0; t < 50; ++t) {
        const auto l = random_list(rng);
        std::vector<double> warped;
        for (double s : l.scores) warped.push_back(std::exp(0.3 * s) - 7.0);
        const auto a = evaluate(l.scores, l.rel, l.grp, 50);
        const auto b = evaluate(warped, l.rel, l.grp, 50);
        EXPECT_EQ(a.ndcg, b.ndcg);
        EXPECT_EQ(a.one_minus_rnd, b.one_minus_rnd);
        EXPECT_EQ(a.one_minus_gpa, b.one_minus_gpa);
    }
}

TEST(Invariance, GroupLabelSwapLeavesGpa) {
    Rng rng(6);
    for (int t = 0; t < 50; ++t) {
        auto l = random_list(rng);
        const auto ranked = RankedList::from_scores(l.scores, l.rel, l.grp);
        const auto acc = pairwise_accuracy(ranked);
        if (acc.pairs01 == 0 || acc.pairs10 == 0) continue;
        const double before = gpa(ranked);
        for (auto& g : l.grp) g = 1 - g;
        EXPECT_NEAR(gpa(RankedList::from_scores(l.scores, l.rel, l.grp)), before, 1e-15);
    }
}

TEST(Evaluate, RecordFieldsAndBounds) {
    Rng rng(8);
    for (int t = 0; t < 50; ++t) {
        const auto l = random_list(rng);
        const auto m = evaluate(l.scores, l.rel, l.grp, 500);
        EXPECT_EQ(m.k, l.scores.size());
        for (double v : {m.ndcg, m.one_minus_rnd, m.one_minus_gpa}) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
    MetricsRecord r{0.5, 0.25, 1.0, 500};
    EXPECT_EQ(r.csv_row(), "0.500000,500,0.250000,1.000000");
    const auto back = MetricsRecord::from_json(r.to_json());
    EXPECT_EQ(back.ndcg, r.ndcg);
    EXPECT_EQ(back.k, r.k);
    EXPECT_DOUBLE_EQ(r.mean(), 1.75 / 3.0);
}
