#pragma once

// Ranking utility and fairness metrics over a single ranked list:
// nDCG@k, rND (normalized discounted difference) and GPA (group pairwise
// accuracy gap).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairrep/error.hpp"

namespace fairrep {

struct RankedItem {
    std::size_t index = 0;
    int relevance = 0;
    int group = 0;
    double score = 0.0;
};

/// Items in ranked order: descending score, ties broken by ascending index.
struct RankedList {
    std::vector<RankedItem> items;

    std::size_t size() const { return items.size(); }

    static RankedList from_scores(std::span<const double> scores, std::span<const int> relevance,
                                  std::span<const int> group) {
        if (scores.size() != relevance.size() || scores.size() != group.size()) {
            throw DimensionError("ranked list: scores, relevance and group lengths differ (" +
                                 std::to_string(scores.size()) + ", " +
                                 std::to_string(relevance.size()) + ", " +
                                 std::to_string(group.size()) + ")");
        }
        RankedList r;
        r.items.reserve(scores.size());
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (!std::isfinite(scores[i])) {
                throw Error("non-finite score for item " + std::to_string(i));
            }
            r.items.push_back({i, relevance[i], group[i], scores[i]});
        }
        std::sort(r.items.begin(), r.items.end(), [](const RankedItem& a, const RankedItem& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.index < b.index;
        });
        return r;
    }
};

inline double ndcg_gain(int relevance) { return std::exp2(static_cast<double>(relevance)) - 1.0; }

/// DCG@k / IDCG@k with gain 2^rel - 1 and discount 1/log2(rank + 1).
/// Returns 1 when the ideal DCG is zero.
inline double ndcg_at_k(const RankedList& r, std::size_t k) {
    if (k == 0) throw ConfigError("nDCG cutoff k must be at least 1");
    if (r.items.empty()) throw DataError("nDCG of an empty list");
    const std::size_t cut = std::min(k, r.size());
    std::vector<int> ideal;
    ideal.reserve(r.size());
    for (const auto& it : r.items) ideal.push_back(it.relevance);
    std::partial_sort(ideal.begin(), ideal.begin() + static_cast<std::ptrdiff_t>(cut), ideal.end(),
                      std::greater<>());
    double dcg = 0.0, idcg = 0.0;
    for (std::size_t p = 0; p < cut; ++p) {
        const double discount = 1.0 / std::log2(static_cast<double>(p) + 2.0);
        dcg += ndcg_gain(r.items[p].relevance) * discount;
        idcg += ndcg_gain(ideal[p]) * discount;
    }
    if (idcg == 0.0) return 1.0;
    return dcg / idcg;
}

namespace detail {

/// Unnormalized rND sum given the protected count inside each top-i prefix.
template <typename PrefixCount>
double rnd_sum(std::size_t n, std::size_t n_protected, std::size_t step, PrefixCount&& prefix) {
    const double global = static_cast<double>(n_protected) / static_cast<double>(n);
    double sum = 0.0;
    for (std::size_t i = step; i <= n; i += step) {
        const double share = static_cast<double>(prefix(i)) / static_cast<double>(i);
        sum += std::abs(share - global) / std::log2(static_cast<double>(i));
    }
    return sum;
}

}  // namespace detail

/// Normalized discounted difference with cut points every `step` positions.
/// 0 means every evaluated prefix matches the global protected share;
/// 1 means the ranking is as skewed as putting one group entirely first.
inline double rnd(const RankedList& r, std::size_t step = 10) {
    if (step < 2) throw ConfigError("rND step must be at least 2 (log2(1) = 0)");
    const std::size_t n = r.size();
    if (n < step) {
        throw DataError("rND needs at least " + std::to_string(step) + " items, got " +
                        std::to_string(n));
    }
    std::vector<std::size_t> prefix(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + (r.items[i].group == 1);
    const std::size_t p = prefix[n];
    if (p == 0 || p == n) throw DataError("rND needs both groups in the list");

    const double value = detail::rnd_sum(n, p, step, [&](std::size_t i) { return prefix[i]; });
    const double first = detail::rnd_sum(n, p, step, [&](std::size_t i) { return std::min(i, p); });
    const double last = detail::rnd_sum(n, p, step, [&](std::size_t i) {
        return i > n - p ? i - (n - p) : std::size_t{0};
    });
    const double z = std::max(first, last);
    if (z == 0.0) return 0.0;
    return value / z;
}

namespace detail {

class Fenwick {
public:
    explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
    void add(std::size_t i) {
        for (++i; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
    }
    /// count of inserted positions < i
    std::size_t prefix(std::size_t i) const {
        std::size_t s = 0;
        for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
        return s;
    }

private:
    std::vector<std::size_t> tree_;
};

}  // namespace detail

struct PairwiseAccuracy {
    double a01 = 0.0;  // higher-relevance item in group 0, lower in group 1
    double a10 = 0.0;
    std::size_t pairs01 = 0;
    std::size_t pairs10 = 0;
};

/// Directional cross-group pairwise accuracies. A pair (i, j) with
/// rel_i > rel_j counts as correct when i is ranked above j.
inline PairwiseAccuracy pairwise_accuracy(const RankedList& r) {
    std::vector<int> levels;
    for (const auto& it : r.items) levels.push_back(it.relevance);
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    const std::size_t m = levels.size();
    auto level_of = [&](int rel) {
        return static_cast<std::size_t>(std::lower_bound(levels.begin(), levels.end(), rel) -
                                        levels.begin());
    };
    // total[g][l]: items of group g at level l
    std::vector<std::size_t> total[2] = {std::vector<std::size_t>(m, 0),
                                         std::vector<std::size_t>(m, 0)};
    for (const auto& it : r.items) ++total[it.group][level_of(it.relevance)];
    std::vector<std::size_t> above[2] = {std::vector<std::size_t>(m + 1, 0),
                                         std::vector<std::size_t>(m + 1, 0)};
    for (int g = 0; g < 2; ++g) {
        for (std::size_t l = m; l-- > 0;) above[g][l] = above[g][l + 1] + total[g][l];
    }
    detail::Fenwick seen[2] = {detail::Fenwick(m), detail::Fenwick(m)};
    std::size_t seen_count[2] = {0, 0};
    std::size_t correct[2] = {0, 0};  // indexed by the group of the higher item
    std::size_t pairs[2] = {0, 0};
    for (const auto& it : r.items) {
        const int b = it.group;
        const int a = 1 - b;
        const std::size_t l = level_of(it.relevance);
        // group-a items with higher relevance, already placed above this one
        correct[a] += seen_count[a] - seen[a].prefix(l + 1);
        pairs[a] += above[a][l + 1];
        seen[b].add(l);
        ++seen_count[b];
    }
    PairwiseAccuracy acc;
    acc.pairs01 = pairs[0];
    acc.pairs10 = pairs[1];
    acc.a01 = pairs[0] ? static_cast<double>(correct[0]) / static_cast<double>(pairs[0]) : 0.0;
    acc.a10 = pairs[1] ? static_cast<double>(correct[1]) / static_cast<double>(pairs[1]) : 0.0;
    return acc;
}

/// |A(0,1) - A(1,0)|. Both directions must have at least one qualifying pair.
inline double gpa(const RankedList& r) {
    const auto acc = pairwise_accuracy(r);
    if (acc.pairs01 == 0 || acc.pairs10 == 0) {
        throw DataError("GPA needs cross-group pairs with unequal relevance in both directions (" +
                        std::to_string(acc.pairs01) + " group0>group1, " +
                        std::to_string(acc.pairs10) + " group1>group0)");
    }
    return std::abs(acc.a01 - acc.a10);
}

struct MetricsRecord {
    double ndcg = 0.0;
    double one_minus_rnd = 0.0;
    double one_minus_gpa = 0.0;
    std::size_t k = 0;

    /// Unweighted mean of the three metrics, used for model selection.
    double mean() const { return (ndcg + one_minus_rnd + one_minus_gpa) / 3.0; }

    nlohmann::json to_json() const {
        return {{"ndcg_at_k", ndcg}, {"k", k}, {"one_minus_rnd", one_minus_rnd},
                {"one_minus_gpa", one_minus_gpa}};
    }
    static MetricsRecord from_json(const nlohmann::json& j) {
        MetricsRecord m;
        m.ndcg = j.at("ndcg_at_k").get<double>();
        m.k = j.at("k").get<std::size_t>();
        m.one_minus_rnd = j.at("one_minus_rnd").get<double>();
        m.one_minus_gpa = j.at("one_minus_gpa").get<double>();
        return m;
    }
    static std::string csv_header() { return "ndcg_at_k,k,one_minus_rnd,one_minus_gpa"; }
    std::string csv_row() const;
};

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

inline std::string MetricsRecord::csv_row() const {
    return format_double(ndcg) + "," + std::to_string(k) + "," + format_double(one_minus_rnd) +
           "," + format_double(one_minus_gpa);
}

/// Ranks items by descending score (ties by index) and computes the three
/// metrics on the whole list, with nDCG cut at min(k, list size).
inline MetricsRecord evaluate(std::span<const double> scores, std::span<const int> relevance,
                              std::span<const int> group, std::size_t k, std::size_t rnd_step = 10) {
    const auto list = RankedList::from_scores(scores, relevance, group);
    MetricsRecord m;
    m.k = std::min(k, list.size());
    m.ndcg = ndcg_at_k(list, m.k);
    m.one_minus_rnd = 1.0 - rnd(list, rnd_step);
    m.one_minus_gpa = 1.0 - gpa(list);
    return m;
}

}  // namespace fairrep
