#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "probust/common.hpp"
#include "probust/network.hpp"
#include "probust/parallel.hpp"
#include "probust/perturb.hpp"

// Deterministic ground-truth PR for low-dimensional and linear cases. These
// back every estimator test; they never touch the RNG.

namespace probust {

struct OracleResult {
    double pr_exact = 0.0;
    std::string method;
    int resolution = 0;  // grid points per dim, or convolution grid size
};

// Exhaustive grid discretization of the non-AE proportion. The grid covers
// the Linf bounding cube; for L2 balls only in-ball points enter numerator
// and denominator.
inline OracleResult grid_pr(const Network& net, const PerturbSpec& spec, int points_per_dim,
                            int threads = 1) {
    spec.validate();
    const int d = spec.dim();
    if (d > 3) throw ConfigError("grid_pr supports at most 3 dimensions");
    if (points_per_dim < 11 || points_per_dim % 2 == 0)
        throw ConfigError("points_per_dim must be odd and at least 11");
    const int ref = predict(net, spec.center);

    std::int64_t total_rows = 1;
    for (int i = 1; i < d; ++i) total_rows *= points_per_dim;
    const double step = 2.0 * spec.radius / (points_per_dim - 1);

    std::vector<std::int64_t> in_ball(total_rows, 0), match(total_rows, 0);
    parallel_for(total_rows, threads, [&](std::int64_t row) {
        Vec x(d);
        std::int64_t rest = row;
        for (int i = 1; i < d; ++i) {
            const int gi = static_cast<int>(rest % points_per_dim);
            rest /= points_per_dim;
            x[i] = spec.center[i] - spec.radius + gi * step;
        }
        for (int g0 = 0; g0 < points_per_dim; ++g0) {
            x[0] = spec.center[0] - spec.radius + g0 * step;
            if (spec.norm == Norm::L2 && !contains(spec, x)) continue;
            ++in_ball[row];
            if (predict(net, x) == ref) ++match[row];
        }
    });
    std::int64_t total = 0, good = 0;
    for (std::int64_t r = 0; r < total_rows; ++r) {
        total += in_ball[r];
        good += match[r];
    }
    if (total == 0) throw ConfigError("grid contains no in-ball points");
    return {static_cast<double>(good) / static_cast<double>(total), "grid", points_per_dim};
}

// PR of the halfspace classifier sign(w.x + b) under independent U(-radius,
// radius) coordinates (Linf uniform). The CDF of w.delta is built by
// sequential box-filter convolution on a uniform grid, with linear
// interpolation at the window ends; grid error is O((span/grid)^2).
inline OracleResult linear_pr_analytic(const Vec& w, double b, const Vec& center, double radius,
                                       int grid_size = 1 << 15) {
    if (w.empty() || w.size() != center.size()) throw ConfigError("weight/center dimension mismatch");
    if (w.size() > 16) throw ConfigError("linear_pr_analytic supports at most 16 dimensions");
    if (!(radius > 0.0)) throw ConfigError("radius must be positive");
    double span = 0.0;
    for (double wi : w) span += std::abs(wi) * radius;
    if (span == 0.0) throw ConfigError("weight vector is zero");

    const int g = grid_size;
    const double lo = -span, hi = span;
    const double dx = (hi - lo) / (g - 1);
    auto grid_x = [&](int i) { return lo + i * dx; };

    // cdf[i] = P(sum of convolved coordinates <= grid_x(i))
    std::vector<double> cdf(g);
    bool first = true;
    for (double wi : w) {
        const double h = std::abs(wi) * radius;
        if (h == 0.0) continue;
        if (first) {
            for (int i = 0; i < g; ++i)
                cdf[i] = std::min(1.0, std::max(0.0, (grid_x(i) + h) / (2.0 * h)));
            first = false;
            continue;
        }
        // antiderivative of the cdf by trapezoid prefix integration
        std::vector<double> integral(g, 0.0);
        for (int i = 1; i < g; ++i)
            integral[i] = integral[i - 1] + 0.5 * (cdf[i] + cdf[i - 1]) * dx;
        auto eval_integral = [&](double x) {
            if (x <= lo) return 0.0;
            if (x >= hi) return integral[g - 1] + (x - hi);  // cdf == 1 beyond the support
            const double t = (x - lo) / dx;
            const int i = std::min(g - 2, static_cast<int>(t));
            const double frac = t - i;
            return integral[i] + frac * (integral[i + 1] - integral[i]);
        };
        std::vector<double> next(g);
        for (int i = 0; i < g; ++i) {
            const double x = grid_x(i);
            next[i] = (eval_integral(x + h) - eval_integral(x - h)) / (2.0 * h);
        }
        cdf = std::move(next);
    }

    const double m = dot(w, center) + b;
    auto cdf_at = [&](double x) {
        if (x <= lo) return 0.0;
        if (x >= hi) return 1.0;
        const double t = (x - lo) / dx;
        const int i = std::min(g - 2, static_cast<int>(t));
        return cdf[i] + (t - i) * (cdf[i + 1] - cdf[i]);
    };
    // class at a point is 1 iff w.x + b > 0 (ties resolve to class 0)
    const double pr = m > 0.0 ? 1.0 - cdf_at(-m) : cdf_at(-m);
    return {std::min(1.0, std::max(0.0, pr)), "linear_analytic", g};
}

}  // namespace probust
