#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairrep/error.hpp"
#include "fairrep/neural_core.hpp"

namespace fairrep {

enum class NormalizerKind { minmax, standard };

inline std::string_view to_string(NormalizerKind k) {
    return k == NormalizerKind::minmax ? "minmax" : "standard";
}

inline NormalizerKind parse_normalizer_kind(std::string_view s) {
    if (s == "minmax") return NormalizerKind::minmax;
    if (s == "standard") return NormalizerKind::standard;
    throw ConfigError("unknown normalizer kind '" + std::string(s) +
                      "' (expected minmax or standard)");
}

/// Per-feature affine map x = (x_raw - offset) / scale and its inverse.
///
/// min-max: offset = column min, scale = max - min.
/// standard: offset = column mean, scale = population standard deviation.
/// Constant columns get scale 1, so the transform is a pure shift.
class Normalizer {
public:
    Normalizer() = default;
    Normalizer(NormalizerKind kind, Vector offset, Vector scale,
               std::vector<std::string> feature_names)
        : kind_(kind), offset_(std::move(offset)), scale_(std::move(scale)),
          names_(std::move(feature_names)) {
        if (offset_.size() != scale_.size()) {
            throw DimensionError("normalizer offset and scale widths differ");
        }
        if (!names_.empty() && names_.size() != static_cast<std::size_t>(offset_.size())) {
            throw DimensionError("normalizer feature name count does not match width");
        }
        for (Eigen::Index j = 0; j < scale_.size(); ++j) {
            if (!(scale_(j) > 0.0) || !std::isfinite(scale_(j)) || !std::isfinite(offset_(j))) {
                throw DataError("normalizer scale must be finite and positive (feature " +
                                std::to_string(j) + ")");
            }
        }
    }

    static Normalizer fit(NormalizerKind kind, const Matrix& data,
                          std::vector<std::string> feature_names = {}) {
        if (data.rows() == 0 || data.cols() == 0) {
            throw DataError("cannot fit a normalizer on empty data");
        }
        for (Eigen::Index r = 0; r < data.rows(); ++r) {
            for (Eigen::Index c = 0; c < data.cols(); ++c) {
                if (!std::isfinite(data(r, c))) {
                    throw DataError("non-finite value at row " + std::to_string(r) +
                                    ", column " + std::to_string(c));
                }
            }
        }
        const Eigen::Index d = data.cols();
        Vector offset(d), scale(d);
        const double n = static_cast<double>(data.rows());
        for (Eigen::Index c = 0; c < d; ++c) {
            if (kind == NormalizerKind::minmax) {
                const double lo = data.col(c).minCoeff();
                const double hi = data.col(c).maxCoeff();
                offset(c) = lo;
                scale(c) = hi - lo;
            } else {
                double mean = 0.0;
                for (Eigen::Index r = 0; r < data.rows(); ++r) mean += data(r, c);
                mean /= n;
                double ss = 0.0;
                for (Eigen::Index r = 0; r < data.rows(); ++r) {
                    const double dv = data(r, c) - mean;
                    ss += dv * dv;
                }
                offset(c) = mean;
                scale(c) = std::sqrt(ss / n);
            }
            if (!(scale(c) > 0.0)) scale(c) = 1.0;
        }
        return Normalizer(kind, std::move(offset), std::move(scale), std::move(feature_names));
    }

    NormalizerKind kind() const { return kind_; }
    const Vector& offset() const { return offset_; }
    const Vector& scale() const { return scale_; }
    const std::vector<std::string>& feature_names() const { return names_; }
    std::size_t width() const { return static_cast<std::size_t>(offset_.size()); }

    Matrix transform(const Matrix& x_raw) const {
        check_width(x_raw.cols());
        Matrix x = x_raw;
        x.rowwise() -= offset_.transpose();
        x.array().rowwise() /= scale_.transpose().array();
        return x;
    }

    Matrix inverse_transform(const Matrix& x) const {
        check_width(x.cols());
        Matrix raw = x;
        raw.array().rowwise() *= scale_.transpose().array();
        raw.rowwise() += offset_.transpose();
        return raw;
    }

    /// Correction in raw units: g^-1(z) - x_raw. For an affine g this is
    /// w * scale, so the offset never enters the correction.
    Matrix raw_correction(const Matrix& x_raw, const Matrix& z) const {
        check_width(x_raw.cols());
        check_width(z.cols());
        if (x_raw.rows() != z.rows()) {
            throw DimensionError("raw_correction: row counts differ (" +
                                 std::to_string(x_raw.rows()) + " vs " +
                                 std::to_string(z.rows()) + ")");
        }
        return inverse_transform(z) - x_raw;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["kind"] = std::string(to_string(kind_));
        j["offsets"] = std::vector<double>(offset_.data(), offset_.data() + offset_.size());
        j["scales"] = std::vector<double>(scale_.data(), scale_.data() + scale_.size());
        j["feature_names"] = names_;
        return j;
    }

    static Normalizer from_json(const nlohmann::json& j) {
        try {
            const auto off = j.at("offsets").get<std::vector<double>>();
            const auto sc = j.at("scales").get<std::vector<double>>();
            return Normalizer(parse_normalizer_kind(j.at("kind").get<std::string>()),
                              Eigen::Map<const Vector>(off.data(), static_cast<Eigen::Index>(off.size())),
                              Eigen::Map<const Vector>(sc.data(), static_cast<Eigen::Index>(sc.size())),
                              j.value("feature_names", std::vector<std::string>{}));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("malformed normalizer JSON: ") + e.what());
        }
    }

private:
    void check_width(Eigen::Index w) const {
        if (static_cast<std::size_t>(w) != width()) {
            throw DimensionError("normalizer fitted on " + std::to_string(width()) +
                                 " features, got width " + std::to_string(w));
        }
    }

    NormalizerKind kind_ = NormalizerKind::standard;
    Vector offset_;
    Vector scale_;
    std::vector<std::string> names_;
};

/// Accepts (standard, tanh), (minmax, sigmoid|centered_sigmoid) and (minmax, tanh).
/// The final correction activation must cover the normalized feature domain.
inline void check_compatibility(NormalizerKind kind, Activation final_activation) {
    const bool ok =
        (kind == NormalizerKind::standard && final_activation == Activation::tanh) ||
        (kind == NormalizerKind::minmax &&
         (final_activation == Activation::sigmoid ||
          final_activation == Activation::centered_sigmoid ||
          final_activation == Activation::tanh));
    if (!ok) {
        throw ConfigError("final activation '" + std::string(to_string(final_activation)) +
                          "' is not compatible with " + std::string(to_string(kind)) +
                          " normalization; allowed pairings: standard+tanh, minmax+sigmoid, "
                          "minmax+tanh");
    }
}

/// Activation actually used for the correction layer. A plain sigmoid can only
/// add, so under min-max it is replaced by the centered variant.
inline Activation correction_activation(NormalizerKind kind, Activation requested) {
    check_compatibility(kind, requested);
    if (requested == Activation::sigmoid) return Activation::centered_sigmoid;
    return requested;
}

}  // namespace fairrep
