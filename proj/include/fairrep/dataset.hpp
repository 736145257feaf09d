#pragma once

// Dataset ingestion: schema-driven CSV loading, the COMPAS and Bank Marketing
// preprocessing recipes, pair generation for the ranking head, stratified fold
// splitting and per-group feature statistics.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fairrep/csv.hpp"
#include "fairrep/error.hpp"
#include "fairrep/neural_core.hpp"

namespace fairrep {

enum class ColumnKind { numeric, categorical, relevance, sensitive, drop };

inline ColumnKind parse_column_kind(const std::string& s) {
    if (s == "numeric") return ColumnKind::numeric;
    if (s == "categorical") return ColumnKind::categorical;
    if (s == "relevance") return ColumnKind::relevance;
    if (s == "sensitive") return ColumnKind::sensitive;
    if (s == "drop") return ColumnKind::drop;
    throw ConfigError("unknown column kind '" + s +
                      "' (expected numeric, categorical, relevance, sensitive or drop)");
}

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    /// Text values mapped to the protected group (sensitive, categorical source).
    std::vector<std::string> protected_values;
    /// Numeric sensitive rule: protected when value < below or value >= at_least.
    std::optional<double> protected_below;
    std::optional<double> protected_at_least;
    /// Ordered text levels for a relevance column (level i -> relevance i).
    std::vector<std::string> levels;
    /// Label pair for the two groups, non-protected first.
    std::pair<std::string, std::string> group_names{"group0", "group1"};
};

/// Column name -> role mapping.
///
/// Grammar, one column per line, '#' starts a comment:
///
///     name: kind [option=value ...]
///
/// kinds: numeric, categorical, relevance, sensitive, drop.
/// options: protected=A|B (sensitive, text match), protected_below=X and
/// protected_at_least=Y (sensitive, numeric rule), levels=a|b|c (relevance from
/// text), groups=unprotected_label|protected_label (sensitive).
struct Schema {
    std::vector<ColumnSpec> columns;

    const ColumnSpec* find(const std::string& name) const {
        for (const auto& c : columns) {
            if (c.name == name) return &c;
        }
        return nullptr;
    }

    static Schema parse(std::istream& in) {
        Schema schema;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            line = csv::trim(line);
            if (line.empty()) continue;
            const auto colon = line.find(':');
            if (colon == std::string::npos) {
                throw ConfigError("schema line " + std::to_string(line_no) +
                                  ": expected 'name: kind [options]'");
            }
            ColumnSpec spec;
            spec.name = csv::trim(line.substr(0, colon));
            std::istringstream rest(line.substr(colon + 1));
            std::string kind;
            rest >> kind;
            spec.kind = parse_column_kind(kind);
            std::string opt;
            while (rest >> opt) {
                const auto eq = opt.find('=');
                if (eq == std::string::npos) {
                    throw ConfigError("schema line " + std::to_string(line_no) +
                                      ": option '" + opt + "' is not key=value");
                }
                const std::string key = opt.substr(0, eq);
                const std::string value = opt.substr(eq + 1);
                auto split = [](const std::string& v) {
                    std::vector<std::string> parts;
                    std::string part;
                    std::istringstream ss(v);
                    while (std::getline(ss, part, '|')) parts.push_back(part);
                    return parts;
                };
                if (key == "protected") {
                    spec.protected_values = split(value);
                } else if (key == "protected_below") {
                    spec.protected_below = std::stod(value);
                } else if (key == "protected_at_least") {
                    spec.protected_at_least = std::stod(value);
                } else if (key == "levels") {
                    spec.levels = split(value);
                } else if (key == "groups") {
                    auto g = split(value);
                    if (g.size() != 2) {
                        throw ConfigError("schema line " + std::to_string(line_no) +
                                          ": groups needs exactly two labels");
                    }
                    spec.group_names = {g[0], g[1]};
                } else {
                    throw ConfigError("schema line " + std::to_string(line_no) +
                                      ": unknown option '" + key + "'");
                }
            }
            schema.columns.push_back(std::move(spec));
        }
        if (schema.columns.empty()) throw ConfigError("schema declares no columns");
        return schema;
    }

    static Schema parse_string(const std::string& text) {
        std::istringstream in(text);
        return parse(in);
    }

    static Schema load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open schema file '" + path + "'");
        return parse(in);
    }
};

struct RawColumn {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    std::vector<double> numbers;     // numeric and relevance columns; NaN = empty cell
    std::vector<std::string> text;   // categorical and sensitive columns
};

/// Typed columns as loaded from CSV; one entry per non-dropped schema column.
struct RawTable {
    std::size_t rows = 0;
    std::vector<RawColumn> columns;

    const RawColumn& column(const std::string& name) const {
        for (const auto& c : columns) {
            if (c.name == name) return c;
        }
        throw DataError("table has no column '" + name + "'");
    }
    bool has_column(const std::string& name) const {
        return std::any_of(columns.begin(), columns.end(),
                           [&](const RawColumn& c) { return c.name == name; });
    }

    /// Sorted distinct values of a text column.
    std::vector<std::string> levels(const std::string& name) const {
        const auto& col = column(name);
        std::set<std::string> s(col.text.begin(), col.text.end());
        return {s.begin(), s.end()};
    }

    /// One indicator column per distinct value, named "column=value", values sorted.
    std::vector<RawColumn> one_hot(const std::string& name) const {
        const auto& col = column(name);
        std::vector<RawColumn> out;
        for (const auto& level : levels(name)) {
            RawColumn ind;
            ind.name = name + "=" + level;
            ind.kind = ColumnKind::numeric;
            ind.numbers.reserve(rows);
            for (const auto& v : col.text) ind.numbers.push_back(v == level ? 1.0 : 0.0);
            out.push_back(std::move(ind));
        }
        return out;
    }

    /// Numeric columns followed by the one-hot expansion of categorical columns,
    /// in schema order.
    std::vector<RawColumn> encoded_features() const {
        std::vector<RawColumn> out;
        for (const auto& c : columns) {
            if (c.kind == ColumnKind::numeric) {
                out.push_back(c);
            } else if (c.kind == ColumnKind::categorical) {
                auto ind = one_hot(c.name);
                out.insert(out.end(), ind.begin(), ind.end());
            }
        }
        return out;
    }

    RawTable select_rows(const std::vector<std::size_t>& idx) const {
        RawTable t;
        t.rows = idx.size();
        for (const auto& c : columns) {
            RawColumn nc;
            nc.name = c.name;
            nc.kind = c.kind;
            if (!c.numbers.empty()) {
                nc.numbers.reserve(idx.size());
                for (auto i : idx) nc.numbers.push_back(c.numbers[i]);
            }
            if (!c.text.empty()) {
                nc.text.reserve(idx.size());
                for (auto i : idx) nc.text.push_back(c.text[i]);
            }
            t.columns.push_back(std::move(nc));
        }
        return t;
    }
};

namespace detail {

inline std::optional<double> parse_number(const std::string& cell) {
    const std::string s = csv::trim(cell);
    if (s.empty() || s == "NA" || s == "N/A" || s == "nan" || s == "NaN") {
        return std::numeric_limits<double>::quiet_NaN();
    }
    double v = 0.0;
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) return std::nullopt;
    return v;
}

}  // namespace detail

/// Loads a delimited file with a header row. Every schema column except
/// `drop` must be present in the header; unlisted header columns are ignored.
/// Empty numeric cells load as NaN; other unparseable numeric cells are errors.
inline RawTable load_csv(std::istream& in, const Schema& schema,
                         const std::string& source = "<stream>") {
    std::string header_line;
    if (!std::getline(in, header_line)) throw DataError(source + ": empty file, no header row");
    const char delim = csv::detect_delimiter(header_line);
    std::vector<std::string> header;
    {
        std::istringstream hs(header_line);
        std::size_t dummy = 0;
        csv::read_record(hs, delim, header, dummy);
        for (auto& h : header) h = csv::trim(h);
    }
    struct Binding {
        std::size_t csv_index;
        std::size_t out_index;
        const ColumnSpec* spec;
    };
    RawTable table;
    std::vector<Binding> bindings;
    for (const auto& spec : schema.columns) {
        if (spec.kind == ColumnKind::drop) continue;
        const auto it = std::find(header.begin(), header.end(), spec.name);
        if (it == header.end()) {
            throw DataError(source + ": header is missing column '" + spec.name + "'");
        }
        bindings.push_back({static_cast<std::size_t>(it - header.begin()), table.columns.size(),
                            &spec});
        table.columns.push_back(RawColumn{spec.name, spec.kind, {}, {}});
    }
    std::vector<std::string> fields;
    std::size_t line_no = 1;
    while (csv::read_record(in, delim, fields, line_no)) {
        if (fields.size() == 1 && csv::trim(fields[0]).empty()) continue;
        if (fields.size() != header.size()) {
            throw DataError(source + ": line " + std::to_string(line_no) + " has " +
                            std::to_string(fields.size()) + " fields, header has " +
                            std::to_string(header.size()));
        }
        for (const auto& b : bindings) {
            auto& col = table.columns[b.out_index];
            const std::string& cell = fields[b.csv_index];
            const bool textual =
                b.spec->kind == ColumnKind::categorical ||
                (b.spec->kind == ColumnKind::sensitive && !b.spec->protected_below &&
                 !b.spec->protected_at_least) ||
                (b.spec->kind == ColumnKind::relevance && !b.spec->levels.empty());
            if (textual) {
                col.text.push_back(csv::trim(cell));
                continue;
            }
            const auto v = detail::parse_number(cell);
            if (!v) {
                throw DataError(source + ": unparseable numeric cell '" + cell + "' at line " +
                                std::to_string(line_no) + ", column '" + b.spec->name + "'");
            }
            col.numbers.push_back(*v);
        }
        ++table.rows;
    }
    // relevance given as text levels becomes numeric
    for (const auto& b : bindings) {
        auto& col = table.columns[b.out_index];
        if (b.spec->kind == ColumnKind::relevance && !b.spec->levels.empty()) {
            for (std::size_t r = 0; r < col.text.size(); ++r) {
                const auto it = std::find(b.spec->levels.begin(), b.spec->levels.end(), col.text[r]);
                if (it == b.spec->levels.end()) {
                    throw DataError(source + ": relevance value '" + col.text[r] + "' in row " +
                                    std::to_string(r + 1) + " is not a declared level");
                }
                col.numbers.push_back(static_cast<double>(it - b.spec->levels.begin()));
            }
            col.text.clear();
        }
    }
    return table;
}

inline RawTable load_csv(const std::string& path, const Schema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open data file '" + path + "'");
    return load_csv(in, schema, path);
}

/// Feature matrix (raw units), ordinal relevance and binary group per row.
struct Dataset {
    Matrix features;
    std::vector<int> relevance;
    std::vector<int> group;  // 1 = protected
    std::vector<std::string> feature_names;
    std::pair<std::string, std::string> group_names{"group0", "group1"};
    int relevance_min = 0;
    int relevance_max = 1;

    std::size_t size() const { return relevance.size(); }
    std::size_t width() const { return static_cast<std::size_t>(features.cols()); }

    std::size_t feature_index(const std::string& name) const {
        const auto it = std::find(feature_names.begin(), feature_names.end(), name);
        if (it == feature_names.end()) throw DataError("unknown feature '" + name + "'");
        return static_cast<std::size_t>(it - feature_names.begin());
    }

    Dataset subset(const std::vector<std::size_t>& idx) const {
        Dataset d;
        d.features.resize(static_cast<Eigen::Index>(idx.size()), features.cols());
        d.relevance.reserve(idx.size());
        d.group.reserve(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) {
            d.features.row(static_cast<Eigen::Index>(r)) =
                features.row(static_cast<Eigen::Index>(idx[r]));
            d.relevance.push_back(relevance[idx[r]]);
            d.group.push_back(group[idx[r]]);
        }
        d.feature_names = feature_names;
        d.group_names = group_names;
        d.relevance_min = relevance_min;
        d.relevance_max = relevance_max;
        return d;
    }

    /// Throws unless relevance is in range, both groups are present and every
    /// feature value is finite.
    void validate() const {
        if (relevance.size() != group.size() ||
            static_cast<std::size_t>(features.rows()) != relevance.size()) {
            throw DataError("dataset columns have inconsistent lengths");
        }
        if (feature_names.size() != static_cast<std::size_t>(features.cols())) {
            throw DataError("dataset feature name count does not match feature width");
        }
        std::size_t protected_count = 0;
        for (std::size_t i = 0; i < size(); ++i) {
            if (relevance[i] < relevance_min || relevance[i] > relevance_max) {
                throw DataError("relevance " + std::to_string(relevance[i]) + " at row " +
                                std::to_string(i) + " outside [" + std::to_string(relevance_min) +
                                ", " + std::to_string(relevance_max) + "]");
            }
            if (group[i] != 0 && group[i] != 1) throw DataError("group values must be 0 or 1");
            protected_count += static_cast<std::size_t>(group[i]);
        }
        if (protected_count == 0 || protected_count == size()) {
            throw DataError("both groups must be non-empty (protected rows: " +
                            std::to_string(protected_count) + " of " + std::to_string(size()) +
                            ")");
        }
        if (!features.allFinite()) throw DataError("dataset contains non-finite feature values");
    }
};

namespace detail {

inline int group_of(const ColumnSpec& spec, const RawColumn& col, std::size_t r) {
    if (spec.protected_below || spec.protected_at_least) {
        const double v = col.numbers[r];
        const bool below = spec.protected_below && v < *spec.protected_below;
        const bool above = spec.protected_at_least && v >= *spec.protected_at_least;
        return (below || above) ? 1 : 0;
    }
    const auto& v = col.text[r];
    return std::find(spec.protected_values.begin(), spec.protected_values.end(), v) !=
                   spec.protected_values.end()
               ? 1
               : 0;
}

}  // namespace detail

/// Generic schema-driven conversion: numeric and one-hot categorical columns
/// become features, rows with missing feature/relevance values are dropped.
inline Dataset to_dataset(const RawTable& raw, const Schema& schema) {
    const ColumnSpec* rel_spec = nullptr;
    const ColumnSpec* sens_spec = nullptr;
    for (const auto& c : schema.columns) {
        if (c.kind == ColumnKind::relevance) rel_spec = &c;
        if (c.kind == ColumnKind::sensitive) sens_spec = &c;
    }
    if (rel_spec == nullptr) throw ConfigError("schema declares no relevance column");
    if (sens_spec == nullptr) throw ConfigError("schema declares no sensitive column");
    const auto& rel = raw.column(rel_spec->name);
    const auto& sens = raw.column(sens_spec->name);
    const auto feats = raw.encoded_features();
    if (feats.empty()) throw DataError("schema yields no feature columns");

    std::vector<std::size_t> keep;
    for (std::size_t r = 0; r < raw.rows; ++r) {
        bool ok = std::isfinite(rel.numbers[r]);
        for (const auto& f : feats) ok = ok && std::isfinite(f.numbers[r]);
        if ((sens_spec->protected_below || sens_spec->protected_at_least)) {
            ok = ok && std::isfinite(sens.numbers[r]);
        }
        if (ok) keep.push_back(r);
    }
    Dataset ds;
    ds.features.resize(static_cast<Eigen::Index>(keep.size()),
                       static_cast<Eigen::Index>(feats.size()));
    for (const auto& f : feats) ds.feature_names.push_back(f.name);
    int lo = std::numeric_limits<int>::max();
    int hi = std::numeric_limits<int>::min();
    for (std::size_t i = 0; i < keep.size(); ++i) {
        const auto r = keep[i];
        for (std::size_t j = 0; j < feats.size(); ++j) {
            ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                feats[j].numbers[r];
        }
        const double rv = rel.numbers[r];
        if (rv != std::floor(rv)) {
            throw DataError("relevance value " + std::to_string(rv) + " in row " +
                            std::to_string(r + 1) + " is not an integer");
        }
        const int ri = static_cast<int>(rv);
        ds.relevance.push_back(ri);
        lo = std::min(lo, ri);
        hi = std::max(hi, ri);
        ds.group.push_back(detail::group_of(*sens_spec, sens, r));
    }
    if (keep.empty()) throw DataError("no complete rows after dropping missing values");
    if (!rel_spec->levels.empty()) {
        ds.relevance_min = 0;
        ds.relevance_max = static_cast<int>(rel_spec->levels.size()) - 1;
    } else {
        ds.relevance_min = lo;
        ds.relevance_max = hi;
    }
    ds.group_names = sens_spec->group_names;
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// COMPAS (ProPublica two-year recidivism table)

inline Schema compas_schema() {
    return Schema::parse_string(R"(
race: sensitive protected=African-American groups=White|Black
sex: categorical
age: numeric
juv_fel_count: numeric
juv_misd_count: numeric
juv_other_count: numeric
priors_count: numeric
c_charge_degree: categorical
decile_score: relevance
days_b_screening_arrest: numeric
is_recid: numeric
score_text: categorical
)");
}

/// Row filter used for COMPAS: screening within 30 days of arrest, known
/// recidivism outcome, felony or misdemeanour charge, a decile score, and
/// African-American or Caucasian defendants. Applying it twice is the same as
/// applying it once.
inline RawTable filter_compas_rows(const RawTable& raw) {
    const auto& days = raw.column("days_b_screening_arrest");
    const auto& recid = raw.column("is_recid");
    const auto& degree = raw.column("c_charge_degree");
    const auto& decile = raw.column("decile_score");
    const auto& race = raw.column("race");
    const RawColumn* score_text = raw.has_column("score_text") ? &raw.column("score_text") : nullptr;
    std::vector<std::size_t> keep;
    for (std::size_t r = 0; r < raw.rows; ++r) {
        const double d = days.numbers[r];
        if (!std::isfinite(d) || d < -30.0 || d > 30.0) continue;
        if (!std::isfinite(recid.numbers[r]) || recid.numbers[r] == -1.0) continue;
        if (degree.text[r] != "F" && degree.text[r] != "M") continue;
        const double s = decile.numbers[r];
        if (!std::isfinite(s) || s < 1.0 || s > 10.0) continue;
        if (score_text != nullptr && score_text->text[r] == "N/A") continue;
        if (race.text[r] != "African-American" && race.text[r] != "Caucasian") continue;
        if (!std::isfinite(raw.column("priors_count").numbers[r])) continue;
        keep.push_back(r);
    }
    return raw.select_rows(keep);
}

/// COMPAS table -> Dataset. Relevance is the decile score (1..10), group 1 is
/// African-American. The sensitive attribute is not part of the features.
inline Dataset compas_preprocess(const RawTable& raw) {
    const RawTable t = filter_compas_rows(raw);
    const auto& race = t.column("race");
    const auto& sex = t.column("sex");
    const auto& degree = t.column("c_charge_degree");
    const std::vector<std::string> numeric = {"priors_count", "age", "juv_fel_count",
                                              "juv_misd_count", "juv_other_count"};
    Dataset ds;
    ds.feature_names = numeric;
    ds.feature_names.insert(ds.feature_names.end(),
                            {"c_charge_degree=F", "c_charge_degree=M", "sex=Male"});
    ds.features.resize(static_cast<Eigen::Index>(t.rows),
                       static_cast<Eigen::Index>(ds.feature_names.size()));
    for (std::size_t r = 0; r < t.rows; ++r) {
        const auto row = static_cast<Eigen::Index>(r);
        for (std::size_t j = 0; j < numeric.size(); ++j) {
            ds.features(row, static_cast<Eigen::Index>(j)) = t.column(numeric[j]).numbers[r];
        }
        ds.features(row, 5) = degree.text[r] == "F" ? 1.0 : 0.0;
        ds.features(row, 6) = degree.text[r] == "M" ? 1.0 : 0.0;
        ds.features(row, 7) = sex.text[r] == "Male" ? 1.0 : 0.0;
        ds.relevance.push_back(static_cast<int>(t.column("decile_score").numbers[r]));
        ds.group.push_back(race.text[r] == "African-American" ? 1 : 0);
    }
    ds.group_names = {"White", "Black"};
    ds.relevance_min = 1;
    ds.relevance_max = 10;
    if (t.rows == 0) throw DataError("COMPAS filter removed every row");
    ds.validate();
    return ds;
}

inline Dataset load_compas(const std::string& path) {
    return compas_preprocess(load_csv(path, compas_schema()));
}

// ---------------------------------------------------------------------------
// UCI Bank Marketing (bank-full.csv layout)

inline Schema bank_schema() {
    return Schema::parse_string(R"(
age: sensitive protected_below=25 protected_at_least=65 groups=age_25_64|age_under25_or_65plus
job: categorical
marital: categorical
education: categorical
default: categorical
balance: numeric
housing: categorical
loan: categorical
contact: categorical
day: numeric
month: categorical
duration: numeric
campaign: numeric
pdays: numeric
previous: numeric
poutcome: categorical
y: relevance levels=no|yes
)");
}

/// Bank table -> Dataset. Group 1 is age < 25 or age >= 65; relevance is the
/// subscription outcome (no = 0, yes = 1). Age itself is not a feature.
inline Dataset bank_preprocess(const RawTable& raw) {
    return to_dataset(raw, bank_schema());
}

inline Dataset load_bank(const std::string& path) {
    return bank_preprocess(load_csv(path, bank_schema()));
}

// ---------------------------------------------------------------------------
// Pairs, folds, statistics

/// (index_hi, index_lo) with relevance[hi] > relevance[lo].
struct Pair {
    std::size_t hi;
    std::size_t lo;
    bool operator==(const Pair&) const = default;
};

using PairSet = std::vector<Pair>;

/// Uniform sample (without replacement, seeded) of at most `max_pairs`
/// cross-relevance pairs, each oriented from higher to lower relevance.
inline PairSet make_pairs(std::span<const int> relevance, std::size_t max_pairs,
                          std::uint64_t seed) {
    const std::size_t n = relevance.size();
    std::map<int, std::size_t> counts;
    for (int r : relevance) ++counts[r];
    if (counts.size() < 2) {
        throw DataError("pair generation needs at least two distinct relevance values");
    }
    std::uint64_t same = 0;
    for (const auto& [r, c] : counts) same += static_cast<std::uint64_t>(c) * c;
    const std::uint64_t total = (static_cast<std::uint64_t>(n) * n - same) / 2;
    auto orient = [&](std::size_t i, std::size_t j) {
        return relevance[i] > relevance[j] ? Pair{i, j} : Pair{j, i};
    };
    Rng rng(seed);
    PairSet pairs;
    if (max_pairs == 0) return pairs;
    if (total <= 4 * static_cast<std::uint64_t>(max_pairs)) {
        pairs.reserve(static_cast<std::size_t>(total));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                if (relevance[i] != relevance[j]) pairs.push_back(orient(i, j));
            }
        }
        if (pairs.size() > max_pairs) {
            // partial Fisher-Yates
            for (std::size_t k = 0; k < max_pairs; ++k) {
                std::uniform_int_distribution<std::size_t> pick(k, pairs.size() - 1);
                std::swap(pairs[k], pairs[pick(rng)]);
            }
            pairs.resize(max_pairs);
        }
        return pairs;
    }
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(max_pairs * 2);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    while (pairs.size() < max_pairs) {
        const auto i = pick(rng);
        const auto j = pick(rng);
        if (i == j || relevance[i] == relevance[j]) continue;
        const auto key = static_cast<std::uint64_t>(std::min(i, j)) * n + std::max(i, j);
        if (!seen.insert(key).second) continue;
        pairs.push_back(orient(i, j));
    }
    return pairs;
}

inline PairSet make_pairs(const Dataset& ds, std::size_t max_pairs, std::uint64_t seed) {
    return make_pairs(std::span<const int>(ds.relevance), max_pairs, seed);
}

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

struct SplitInfo {
    bool stratified_by_relevance = true;
};

/// k disjoint test folds covering every row, each with the complement as
/// training set. Rows are stratified by (group, relevance) when every group
/// and relevance class has at least k members, otherwise by group only.
inline std::vector<Fold> split_folds(std::span<const int> relevance, std::span<const int> group,
                                     std::size_t k, std::uint64_t seed,
                                     SplitInfo* info = nullptr) {
    const std::size_t n = relevance.size();
    if (k < 2) throw ConfigError("fold count k must be at least 2, got " + std::to_string(k));
    if (group.size() != n) throw DimensionError("relevance and group lengths differ");
    if (n < k) {
        throw DataError("cannot split " + std::to_string(n) + " rows into " + std::to_string(k) +
                        " folds");
    }
    std::map<int, std::size_t> rel_counts, group_counts;
    for (std::size_t i = 0; i < n; ++i) {
        ++rel_counts[relevance[i]];
        ++group_counts[group[i]];
    }
    bool full = true;
    for (const auto& [r, c] : rel_counts) full = full && c >= k;
    for (const auto& [g, c] : group_counts) full = full && c >= k;
    if (!full) {
        std::clog << "warning: stratification by (group, relevance) infeasible for k=" << k
                  << "; falling back to group-only stratification\n";
    }
    if (info != nullptr) info->stratified_by_relevance = full;

    std::map<std::pair<int, int>, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < n; ++i) {
        strata[{group[i], full ? relevance[i] : 0}].push_back(i);
    }
    Rng rng(seed);
    std::vector<std::vector<std::size_t>> tests(k);
    std::size_t cursor = 0;
    for (auto& [key, members] : strata) {
        std::shuffle(members.begin(), members.end(), rng);
        for (auto idx : members) {
            tests[cursor % k].push_back(idx);
            ++cursor;
        }
    }
    std::vector<Fold> folds(k);
    std::vector<char> in_test(n);
    for (std::size_t f = 0; f < k; ++f) {
        std::sort(tests[f].begin(), tests[f].end());
        std::fill(in_test.begin(), in_test.end(), 0);
        for (auto i : tests[f]) in_test[i] = 1;
        folds[f].test = tests[f];
        folds[f].train.reserve(n - tests[f].size());
        for (std::size_t i = 0; i < n; ++i) {
            if (!in_test[i]) folds[f].train.push_back(i);
        }
    }
    return folds;
}

inline std::vector<Fold> split_folds(const Dataset& ds, std::size_t k, std::uint64_t seed,
                                     SplitInfo* info = nullptr) {
    return split_folds(std::span<const int>(ds.relevance), std::span<const int>(ds.group), k,
                       seed, info);
}

struct GroupMeans {
    double group0 = 0.0;
    double group1 = 0.0;
    double difference = 0.0;  // |group1 - group0|
};

inline GroupMeans group_feature_means(const Dataset& ds, const std::string& feature) {
    const auto j = static_cast<Eigen::Index>(ds.feature_index(feature));
    double sum[2] = {0.0, 0.0};
    std::size_t cnt[2] = {0, 0};
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const int g = ds.group[i];
        sum[g] += ds.features(static_cast<Eigen::Index>(i), j);
        ++cnt[g];
    }
    if (cnt[0] == 0 || cnt[1] == 0) throw DataError("group_feature_means: a group is empty");
    GroupMeans m;
    m.group0 = sum[0] / static_cast<double>(cnt[0]);
    m.group1 = sum[1] / static_cast<double>(cnt[1]);
    m.difference = std::abs(m.group1 - m.group0);
    return m;
}

}  // namespace fairrep
