#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "probust/common.hpp"
#include "probust/estimators.hpp"
#include "probust/parallel.hpp"

// Tail-sensitive local robustness measures over sampled AE margins
// (higher margin = worse). All four are empirical-distribution functionals
// with the quantile conventions spelled out per operation.

namespace probust {

struct MarginSample {
    Vec values;
    std::uint64_t seed = 0;
    std::string spec_ref;

    void validate() const {
        if (values.empty()) throw ConfigError("margin sample is empty");
        if (!all_finite(values)) throw NumericFault("margin sample contains non-finite values");
    }
};

enum class RiskMeasure { Var, Cvar, Evar, EssSup };

inline std::string to_string(RiskMeasure m) {
    switch (m) {
        case RiskMeasure::Var: return "var";
        case RiskMeasure::Cvar: return "cvar";
        case RiskMeasure::Evar: return "evar";
        case RiskMeasure::EssSup: return "ess_sup";
    }
    return "var";
}

inline RiskMeasure risk_measure_from_string(const std::string& s) {
    if (s == "var") return RiskMeasure::Var;
    if (s == "cvar") return RiskMeasure::Cvar;
    if (s == "evar") return RiskMeasure::Evar;
    if (s == "ess_sup") return RiskMeasure::EssSup;
    throw ConfigError("unknown risk measure: " + s);
}

struct RiskResult {
    RiskMeasure measure = RiskMeasure::Var;
    double alpha_or_rho = 0.0;
    double value = 0.0;
    std::int64_t n = 0;
    std::uint64_t seed = 0;
};

inline MarginSample sample_margins(const Network& net, const PerturbSpec& spec, std::int64_t n,
                                   RngKey key, int threads = 1) {
    if (n < 1) throw ConfigError("sample_margins requires n >= 1");
    spec.validate();
    const int ref = predict(net, spec.center);
    const RngKey skey = key.sub(0x9a01);
    MarginSample out;
    out.values.resize(n);
    out.seed = key.seed;
    parallel_for(n, threads, [&](std::int64_t i) {
        const Vec x = sample(spec, skey, static_cast<std::uint64_t>(i));
        out.values[i] = ae_margin(net, spec, ref, x);
    });
    out.validate();
    return out;
}

namespace detail {

inline void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0,1]");
}

inline std::vector<double> sorted_desc(const Vec& v) {
    std::vector<double> s = v;
    std::sort(s.begin(), s.end(), std::greater<double>());
    return s;
}

}  // namespace detail

// Empirical upper alpha-quantile: sort descending, take index ceil(alpha*n)-1.
inline double var_alpha(const MarginSample& s, double alpha) {
    s.validate();
    detail::check_alpha(alpha);
    const std::vector<double> d = detail::sorted_desc(s.values);
    const std::int64_t n = static_cast<std::int64_t>(d.size());
    const std::int64_t idx = std::min<std::int64_t>(
        n, static_cast<std::int64_t>(std::ceil(alpha * static_cast<double>(n))));
    return d[std::max<std::int64_t>(1, idx) - 1];
}

// Mean of the worst ceil(alpha*n) values.
inline double cvar_alpha(const MarginSample& s, double alpha) {
    s.validate();
    detail::check_alpha(alpha);
    const std::vector<double> d = detail::sorted_desc(s.values);
    const std::int64_t n = static_cast<std::int64_t>(d.size());
    const std::int64_t k = std::max<std::int64_t>(
        1, std::min<std::int64_t>(
               n, static_cast<std::int64_t>(std::ceil(alpha * static_cast<double>(n)))));
    double sum = 0.0;
    for (std::int64_t i = 0; i < k; ++i) sum += d[i];
    return sum / static_cast<double>(k);
}

namespace detail {

// z^-1 * (log mean exp(z*v) + ln(1/alpha)), stabilized through the max.
inline double evar_objective(const Vec& v, double alpha, double z) {
    const double vmax = *std::max_element(v.begin(), v.end());
    double acc = 0.0;
    for (double x : v) acc += std::exp(z * (x - vmax));
    const double lme = z * vmax + std::log(acc / static_cast<double>(v.size()));
    const double obj = (lme + std::log(1.0 / alpha)) / z;
    if (!std::isfinite(obj)) throw NumericFault("non-finite evar objective");
    return obj;
}

}  // namespace detail

// inf over z>0 of z^-1*(log-mean-exp(z*values) + ln(1/alpha)). The objective
// is convex in z; golden-section over log z in [-10, 10] finds the minimum.
// alpha = 1 is the z->0 limit, which is exactly the mean.
inline double evar_alpha(const MarginSample& s, double alpha) {
    s.validate();
    detail::check_alpha(alpha);
    if (alpha == 1.0) {
        double sum = 0.0;
        for (double x : s.values) sum += x;
        return sum / static_cast<double>(s.values.size());
    }
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = -10.0, b = 10.0;
    double c = b - gr * (b - a);
    double d = a + gr * (b - a);
    double fc = detail::evar_objective(s.values, alpha, std::exp(c));
    double fd = detail::evar_objective(s.values, alpha, std::exp(d));
    for (int it = 0; it < 200; ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = detail::evar_objective(s.values, alpha, std::exp(c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = detail::evar_objective(s.values, alpha, std::exp(d));
        }
    }
    // EVaR is bounded by the sample max; the bounded search may sit slightly
    // above it when the infimum is attained as z grows without bound.
    return std::min(std::min(fc, fd), *std::max_element(s.values.begin(), s.values.end()));
}

// Smallest value exceeded by at most a rho fraction of the sample: with
// K = floor(rho*n) allowed exceedances, the (n-K)-th smallest value.
inline double ess_sup_rho(const MarginSample& s, double rho) {
    s.validate();
    detail::check_alpha(rho);
    const std::int64_t n = static_cast<std::int64_t>(s.values.size());
    std::vector<double> asc = s.values;
    std::sort(asc.begin(), asc.end());
    const std::int64_t k = std::min<std::int64_t>(
        n - 1, static_cast<std::int64_t>(std::floor(rho * static_cast<double>(n))));
    return asc[n - k - 1];
}

inline RiskResult risk_eval(const MarginSample& s, RiskMeasure m, double alpha_or_rho) {
    RiskResult r;
    r.measure = m;
    r.alpha_or_rho = alpha_or_rho;
    r.n = static_cast<std::int64_t>(s.values.size());
    r.seed = s.seed;
    switch (m) {
        case RiskMeasure::Var: r.value = var_alpha(s, alpha_or_rho); break;
        case RiskMeasure::Cvar: r.value = cvar_alpha(s, alpha_or_rho); break;
        case RiskMeasure::Evar: r.value = evar_alpha(s, alpha_or_rho); break;
        case RiskMeasure::EssSup: r.value = ess_sup_rho(s, alpha_or_rho); break;
    }
    return r;
}

}  // namespace probust
