#pragma once

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "probust/common.hpp"
#include "probust/rng.hpp"

// Perturbation norm-balls and the local distribution perturbed inputs are
// drawn from. Sampling is deterministic and index-addressable: the vector
// returned for (spec, key, index) never depends on evaluation order.

namespace probust {

enum class Distribution { UniformBall, TruncGaussian };

inline std::string to_string(Distribution d) {
    return d == Distribution::UniformBall ? "uniform_ball" : "trunc_gaussian";
}

inline Distribution distribution_from_string(const std::string& s) {
    if (s == "uniform_ball") return Distribution::UniformBall;
    if (s == "trunc_gaussian") return Distribution::TruncGaussian;
    throw ConfigError("unknown distribution: " + s);
}

using DomainBox = std::vector<std::pair<double, double>>;

struct PerturbSpec {
    Vec center;
    double radius = 0.0;
    Norm norm = Norm::Linf;
    Distribution distribution = Distribution::UniformBall;
    double sigma = 0.0;  // trunc_gaussian only
    std::optional<DomainBox> domain_box;

    int dim() const { return static_cast<int>(center.size()); }

    void validate() const {
        if (center.empty()) throw ConfigError("perturbation center is empty");
        if (!all_finite(center)) throw ConfigError("perturbation center is not finite");
        if (!(radius > 0.0) || !std::isfinite(radius))
            throw ConfigError("perturbation radius must be positive and finite");
        if (distribution == Distribution::TruncGaussian && !(sigma > 0.0))
            throw ConfigError("trunc_gaussian requires sigma > 0");
        if (domain_box) {
            if (domain_box->size() != center.size())
                throw ConfigError("domain_box dimension mismatch");
            for (std::size_t i = 0; i < center.size(); ++i) {
                const auto& [lo, hi] = (*domain_box)[i];
                if (!(lo < hi)) throw ConfigError("domain_box has empty interval");
                if (center[i] < lo || center[i] > hi)
                    throw ConfigError("center lies outside domain_box");
            }
        }
    }
};

struct SampleInfo {
    Vec point;
    bool clamped = false;
};

namespace detail {

constexpr int kTruncGaussianRetryCap = 10000;

// Perturbation delta with ||delta|| <= radius under the spec's norm.
inline Vec sample_delta(Norm norm, Distribution dist, double radius, double sigma, int d,
                        PhiloxStream& rng) {
    Vec delta(d);
    switch (dist) {
        case Distribution::UniformBall:
            if (norm == Norm::Linf) {
                for (int i = 0; i < d; ++i) delta[i] = rng.next_uniform(-radius, radius);
            } else {
                // Volume-uniform in the L2 ball: gaussian direction, radius
                // scaled by U^(1/d).
                double nn = 0.0;
                for (int i = 0; i < d; ++i) {
                    delta[i] = rng.next_gaussian();
                    nn += delta[i] * delta[i];
                }
                nn = std::sqrt(nn);
                if (nn == 0.0) nn = 1.0;
                const double r = radius * std::pow(rng.next_double_open(), 1.0 / d);
                for (int i = 0; i < d; ++i) delta[i] *= r / nn;
            }
            return delta;
        case Distribution::TruncGaussian:
            for (int attempt = 0; attempt < kTruncGaussianRetryCap; ++attempt) {
                for (int i = 0; i < d; ++i) delta[i] = sigma * rng.next_gaussian();
                if (norm_of(delta, norm) <= radius) return delta;
            }
            throw ConfigError("trunc_gaussian rejection cap exhausted (sigma too large for radius)");
    }
    throw ConfigError("unknown distribution");
}

}  // namespace detail

inline SampleInfo sample_info(const PerturbSpec& spec, RngKey key, std::uint64_t index) {
    spec.validate();
    PhiloxStream rng(key, index);
    Vec delta = detail::sample_delta(spec.norm, spec.distribution, spec.radius, spec.sigma,
                                     spec.dim(), rng);
    SampleInfo out;
    out.point.resize(spec.center.size());
    for (std::size_t i = 0; i < spec.center.size(); ++i) out.point[i] = spec.center[i] + delta[i];
    if (spec.domain_box) {
        for (std::size_t i = 0; i < out.point.size(); ++i) {
            const auto& [lo, hi] = (*spec.domain_box)[i];
            const double clamped = std::min(hi, std::max(lo, out.point[i]));
            if (clamped != out.point[i]) {
                out.point[i] = clamped;
                out.clamped = true;
            }
        }
    }
    return out;
}

inline Vec sample(const PerturbSpec& spec, RngKey key, std::uint64_t index) {
    return sample_info(spec, key, index).point;
}

inline bool contains(const PerturbSpec& spec, const Vec& x) {
    if (x.size() != spec.center.size()) throw ConfigError("point dimension mismatch");
    return distance(x, spec.center, spec.norm) <= spec.radius + 1e-12;
}

// Nearest in-ball point under the spec's norm; identity on interior points.
inline Vec project(const PerturbSpec& spec, const Vec& x) {
    if (x.size() != spec.center.size()) throw ConfigError("point dimension mismatch");
    Vec out = x;
    if (spec.norm == Norm::Linf) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = std::min(spec.center[i] + spec.radius,
                              std::max(spec.center[i] - spec.radius, out[i]));
        }
    } else {
        const Vec d = sub(x, spec.center);
        const double n = norm_l2(d);
        if (n > spec.radius) {
            const double scale = spec.radius / n;
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] = spec.center[i] + d[i] * scale;
        }
    }
    return out;
}

inline Vec clamp_to_box(const DomainBox& box, Vec x) {
    for (std::size_t i = 0; i < x.size(); ++i)
        x[i] = std::min(box[i].second, std::max(box[i].first, x[i]));
    return x;
}

}  // namespace probust
