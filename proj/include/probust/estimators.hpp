#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "probust/common.hpp"
#include "probust/network.hpp"
#include "probust/parallel.hpp"
#include "probust/perturb.hpp"
#include "probust/rng.hpp"

// Statistical estimators of local probabilistic robustness: the probability,
// under the spec's perturbation distribution, that the prediction at the
// center is preserved. All estimators count forward passes in n_model_evals
// and depend only on (inputs, seed), never on worker count.

namespace probust {

struct PrEstimate {
    double pr_point = 0.0;
    double ae_point = 0.0;  // 1 - pr_point
    double ci_low = 0.0;    // two-sided interval on pr_point
    double ci_high = 1.0;
    double confidence = 0.0;
    std::int64_t n_model_evals = 0;
    std::string method;
    std::uint64_t seed = 0;
    std::int64_t runtime_ms = 0;
    std::map<std::string, double> meta;
};

enum class SeqVerdict { PrAtLeastThreshold, PrBelowThreshold, Undecided };

inline std::string to_string(SeqVerdict v) {
    switch (v) {
        case SeqVerdict::PrAtLeastThreshold: return "pr_at_least_threshold";
        case SeqVerdict::PrBelowThreshold: return "pr_below_threshold";
        case SeqVerdict::Undecided: return "undecided";
    }
    return "undecided";
}

struct SeqDecision {
    SeqVerdict verdict = SeqVerdict::Undecided;
    double threshold = 0.0;
    PrEstimate estimate;
    std::int64_t samples_used = 0;
    std::int64_t max_samples = 0;
};

struct AmlsConfig {
    int n_particles = 1000;
    double level_fraction = 0.1;  // rho
    int mh_steps = 20;
    double proposal_scale = 0.2;  // relative to the ball radius
    int max_levels = 100;

    void validate() const {
        if (n_particles < 10) throw ConfigError("amls needs at least 10 particles");
        if (!(level_fraction > 0.0 && level_fraction < 1.0))
            throw ConfigError("level_fraction must lie in (0,1)");
        if (mh_steps < 1) throw ConfigError("mh_steps must be at least 1");
        if (!(proposal_scale > 0.0)) throw ConfigError("proposal_scale must be positive");
        if (max_levels < 1) throw ConfigError("max_levels must be at least 1");
    }
};

// ---------------------------------------------------------------------------
// AE indicator and margin

inline int ae_indicator(const Network& net, const PerturbSpec&, int reference_label,
                        const Vec& x_prime) {
    return predict(net, x_prime) != reference_label ? 1 : 0;
}

// Level function for splitting estimators: max over wrong classes of
// (logit_c - logit_ref). Nonnegative exactly on margin-tied-or-worse points;
// the indicator stays authoritative for AE membership at ties.
inline double ae_margin(const Network& net, const PerturbSpec&, int reference_label,
                        const Vec& x_prime) {
    const Vec logits = forward(net, x_prime);
    double best = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < static_cast<int>(logits.size()); ++c)
        if (c != reference_label) best = std::max(best, logits[c] - logits[reference_label]);
    return best;
}

namespace detail {

struct PointEval {
    double margin;
    bool is_ae;
};

// One forward pass serving both the margin and the indicator.
inline PointEval point_eval(const Network& net, int reference_label, const Vec& x) {
    const Vec logits = forward(net, x);
    if (!all_finite(logits)) throw NumericFault("non-finite logits");
    double best = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < static_cast<int>(logits.size()); ++c)
        if (c != reference_label) best = std::max(best, logits[c] - logits[reference_label]);
    return {best, argmax_lowest(logits) != reference_label};
}

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    std::int64_t elapsed_ms() const {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::steady_clock::now() - start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Interval constructions

enum class Bound { Hoeffding, ClopperPearson, ChernoffRel };

inline std::string to_string(Bound b) {
    switch (b) {
        case Bound::Hoeffding: return "hoeffding";
        case Bound::ClopperPearson: return "clopper_pearson";
        case Bound::ChernoffRel: return "chernoff_rel";
    }
    return "hoeffding";
}

inline Bound bound_from_string(const std::string& s) {
    if (s == "hoeffding") return Bound::Hoeffding;
    if (s == "clopper_pearson") return Bound::ClopperPearson;
    if (s == "chernoff_rel") return Bound::ChernoffRel;
    throw ConfigError("unknown bound: " + s);
}

inline double hoeffding_halfwidth(std::int64_t n, double confidence) {
    return std::sqrt(std::log(2.0 / (1.0 - confidence)) / (2.0 * static_cast<double>(n)));
}

struct Interval {
    double low;
    double high;
};

// Exact two-sided binomial interval on the success probability given k
// successes in n trials.
inline Interval clopper_pearson(std::int64_t k, std::int64_t n, double confidence) {
    const double alpha = 1.0 - confidence;
    Interval iv{0.0, 1.0};
    if (k > 0)
        iv.low = boost::math::quantile(
            boost::math::beta_distribution<double>(static_cast<double>(k),
                                                   static_cast<double>(n - k + 1)),
            alpha / 2.0);
    if (k < n)
        iv.high = boost::math::quantile(
            boost::math::beta_distribution<double>(static_cast<double>(k + 1),
                                                   static_cast<double>(n - k)),
            1.0 - alpha / 2.0);
    return iv;
}

// Multiplicative-Chernoff interval on the AE proportion, inverting the
// lower-tail bound exp(-mu d^2/2) and the upper-tail bound
// exp(-mu d^2/(2+d)) at alpha/2 each. Conservative.
inline Interval chernoff_rel(std::int64_t ae_count, std::int64_t n, double confidence) {
    const double L = std::log(2.0 / (1.0 - confidence));
    const double t = static_cast<double>(ae_count);
    const double mu_hi = t + L + std::sqrt(2.0 * t * L + L * L);
    const double mu_lo = std::max(0.0, t + 0.5 * L - 0.5 * std::sqrt(8.0 * t * L + L * L));
    return {std::min(1.0, std::max(0.0, mu_lo / static_cast<double>(n))),
            std::min(1.0, mu_hi / static_cast<double>(n))};
}

namespace detail {

inline Interval pr_interval(Bound bound, std::int64_t non_ae, std::int64_t n, double confidence) {
    switch (bound) {
        case Bound::Hoeffding: {
            const double p = static_cast<double>(non_ae) / static_cast<double>(n);
            const double eps = hoeffding_halfwidth(n, confidence);
            return {std::max(0.0, p - eps), std::min(1.0, p + eps)};
        }
        case Bound::ClopperPearson:
            return clopper_pearson(non_ae, n, confidence);
        case Bound::ChernoffRel: {
            const Interval ae = chernoff_rel(n - non_ae, n, confidence);
            return {1.0 - ae.high, 1.0 - ae.low};
        }
    }
    throw ConfigError("unknown bound");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Simple Monte Carlo

inline PrEstimate mc_estimate(const Network& net, const PerturbSpec& spec, std::int64_t n,
                              double confidence, Bound bound, RngKey key, int threads = 1) {
    if (n < 1) throw ConfigError("mc_estimate requires n >= 1");
    if (!(confidence > 0.0 && confidence < 1.0))
        throw ConfigError("confidence must lie in (0,1)");
    spec.validate();
    const detail::Stopwatch sw;
    const int ref = predict(net, spec.center);
    const RngKey skey = key.sub(0x3c01);

    std::vector<std::uint8_t> ae(n);
    std::vector<std::uint8_t> clamped(n);
    parallel_for(n, threads, [&](std::int64_t i) {
        const SampleInfo s = sample_info(spec, skey, static_cast<std::uint64_t>(i));
        clamped[i] = s.clamped ? 1 : 0;
        ae[i] = static_cast<std::uint8_t>(ae_indicator(net, spec, ref, s.point));
    });
    const std::int64_t ae_count = std::accumulate(ae.begin(), ae.end(), std::int64_t{0});
    const std::int64_t clamp_count = std::accumulate(clamped.begin(), clamped.end(), std::int64_t{0});
    const std::int64_t non_ae = n - ae_count;

    PrEstimate est;
    est.pr_point = static_cast<double>(non_ae) / static_cast<double>(n);
    est.ae_point = static_cast<double>(ae_count) / static_cast<double>(n);
    const Interval iv = detail::pr_interval(bound, non_ae, n, confidence);
    est.ci_low = iv.low;
    est.ci_high = iv.high;
    est.confidence = confidence;
    est.n_model_evals = n + 1;
    est.method = "mc_" + to_string(bound);
    est.seed = key.seed;
    if (clamp_count > 0)
        est.meta["clamped_fraction"] = static_cast<double>(clamp_count) / static_cast<double>(n);
    est.runtime_ms = sw.elapsed_ms();
    return est;
}

// ---------------------------------------------------------------------------
// Sequential estimation with early stopping

// Anytime-valid confidence sequence: geometric looks (batch, 2*batch, ...)
// with per-look Hoeffding budget 6*(1-confidence)/(pi^2 t^2), so the total
// error over all looks stays below 1-confidence.
inline SeqDecision seq_estimate(const Network& net, const PerturbSpec& spec, double threshold,
                                double confidence, std::int64_t max_samples, std::int64_t batch,
                                RngKey key, int threads = 1) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0,1)");
    if (!(confidence > 0.0 && confidence < 1.0))
        throw ConfigError("confidence must lie in (0,1)");
    if (batch < 1 || max_samples < 1) throw ConfigError("batch and max_samples must be positive");
    spec.validate();
    const detail::Stopwatch sw;
    const int ref = predict(net, spec.center);
    const RngKey skey = key.sub(0x5e01);

    SeqDecision dec;
    dec.threshold = threshold;
    dec.max_samples = max_samples;

    std::int64_t used = 0;
    std::int64_t non_ae = 0;
    std::int64_t look = 0;
    double lo = 0.0, hi = 1.0, phat = 0.0, eps = 1.0;
    while (used < max_samples) {
        ++look;
        const std::int64_t want = std::min(batch << (look - 1), max_samples - used);
        std::vector<std::uint8_t> ae(want);
        parallel_for(want, threads, [&](std::int64_t i) {
            const Vec x = sample(spec, skey, static_cast<std::uint64_t>(used + i));
            ae[i] = static_cast<std::uint8_t>(ae_indicator(net, spec, ref, x));
        });
        non_ae += want - std::accumulate(ae.begin(), ae.end(), std::int64_t{0});
        used += want;

        const double alpha_t =
            6.0 * (1.0 - confidence) / (M_PI * M_PI * static_cast<double>(look) * look);
        eps = std::sqrt(std::log(2.0 / alpha_t) / (2.0 * static_cast<double>(used)));
        phat = static_cast<double>(non_ae) / static_cast<double>(used);
        lo = std::max(0.0, phat - eps);
        hi = std::min(1.0, phat + eps);
        if (lo >= threshold) {
            dec.verdict = SeqVerdict::PrAtLeastThreshold;
            break;
        }
        if (hi <= threshold) {
            dec.verdict = SeqVerdict::PrBelowThreshold;
            break;
        }
    }
    dec.samples_used = used;
    dec.estimate.pr_point = phat;
    dec.estimate.ae_point = 1.0 - phat;
    dec.estimate.ci_low = lo;
    dec.estimate.ci_high = hi;
    dec.estimate.confidence = confidence;
    dec.estimate.n_model_evals = used + 1;
    dec.estimate.method = "seq_adaptive_hoeffding";
    dec.estimate.seed = key.seed;
    dec.estimate.meta["looks"] = static_cast<double>(look);
    dec.estimate.runtime_ms = sw.elapsed_ms();
    return dec;
}

// ---------------------------------------------------------------------------
// Metropolis-Hastings kernel shared by the splitting estimators

namespace detail {

// Unnormalized log-density of the perturbation delta under the spec's
// distribution (uniform contributes 0; the ratio handles trunc_gaussian).
inline double delta_log_density(const PerturbSpec& spec, const Vec& x) {
    if (spec.distribution == Distribution::UniformBall) return 0.0;
    const Vec d = sub(x, spec.center);
    return -dot(d, d) / (2.0 * spec.sigma * spec.sigma);
}

struct ChainState {
    Vec x;
    double margin;
    bool is_ae;
};

// Fixed-length MH chain targeting the spec distribution restricted to
// {margin > level}. Proposals are ball steps of half-width step_scale,
// rejected (not projected) when they leave the ball or the domain box, which
// keeps the restricted distribution invariant even when the target region
// touches the ball boundary.
inline int mh_chain(const Network& net, const PerturbSpec& spec, int ref, double level,
                    int steps, double step_scale, ChainState& st, PhiloxStream& rng) {
    int accepted = 0;
    const int d = spec.dim();
    for (int s = 0; s < steps; ++s) {
        Vec y(d);
        for (int i = 0; i < d; ++i) y[i] = st.x[i];
        const Vec delta =
            sample_delta(spec.norm, Distribution::UniformBall, step_scale, 0.0, d, rng);
        for (int i = 0; i < d; ++i) y[i] += delta[i];
        const double u = rng.next_double();
        if (!contains(spec, y)) continue;
        if (spec.domain_box) {
            bool inside = true;
            for (int i = 0; i < d; ++i) {
                const auto& [lo, hi] = (*spec.domain_box)[i];
                if (y[i] < lo || y[i] > hi) {
                    inside = false;
                    break;
                }
            }
            if (!inside) continue;
        }
        const PointEval pe = point_eval(net, ref, y);
        if (!(pe.margin > level)) continue;
        const double log_ratio = delta_log_density(spec, y) - delta_log_density(spec, st.x);
        if (log_ratio < 0.0 && u >= std::exp(log_ratio)) continue;
        st.x = std::move(y);
        st.margin = pe.margin;
        st.is_ae = pe.is_ae;
        ++accepted;
    }
    return accepted;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Adaptive multi-level splitting

// Estimates the AE proportion p as rho^levels * final_fraction. Each level
// keeps the particles above the empirical (1-rho)-quantile of the margin,
// resamples the rest from the survivors and rejuvenates them with MH moves
// constrained above the level. The proposal width shrinks with the current
// conditional volume estimate (rho^(j/d) per level) so deep levels keep
// moving; a fixed width stalls once the level set gets much narrower than
// the proposal.
inline PrEstimate amls_estimate(const Network& net, const PerturbSpec& spec,
                                const AmlsConfig& cfg, double confidence, RngKey key,
                                int threads = 1) {
    cfg.validate();
    if (!(confidence > 0.0 && confidence < 1.0))
        throw ConfigError("confidence must lie in (0,1)");
    spec.validate();
    const detail::Stopwatch sw;
    const int ref = predict(net, spec.center);
    const int n = cfg.n_particles;
    const double rho = cfg.level_fraction;
    const int d = spec.dim();

    std::vector<detail::ChainState> particles(n);
    const RngKey init_key = key.sub(0xa301);
    parallel_for(n, threads, [&](std::int64_t i) {
        Vec x = sample(spec, init_key, static_cast<std::uint64_t>(i));
        const detail::PointEval pe = detail::point_eval(net, ref, x);
        particles[i] = {std::move(x), pe.margin, pe.is_ae};
    });
    std::int64_t evals = n + 1;

    int levels = 0;
    std::int64_t proposals = 0, accepts = 0;
    double final_fraction = 0.0;
    // quantile index: the ceil((1-rho)*n)-th smallest margin
    const int q_idx = static_cast<int>(std::ceil((1.0 - rho) * n)) - 1;
    while (true) {
        std::vector<double> margins(n);
        for (int i = 0; i < n; ++i) margins[i] = particles[i].margin;
        std::vector<double> sorted = margins;
        std::sort(sorted.begin(), sorted.end());
        const double level = sorted[q_idx];
        if (level >= 0.0) {
            int ae_count = 0;
            for (const auto& p : particles) ae_count += p.is_ae ? 1 : 0;
            final_fraction = static_cast<double>(ae_count) / static_cast<double>(n);
            break;
        }
        ++levels;
        if (levels > cfg.max_levels)
            throw EventTooRare("event too rare for configuration: amls exceeded max_levels=" +
                               std::to_string(cfg.max_levels));

        std::vector<char> is_survivor(n, 0);
        std::vector<int> survivors;
        for (int i = 0; i < n; ++i)
            if (particles[i].margin > level) {
                is_survivor[i] = 1;
                survivors.push_back(i);
            }
        if (survivors.empty())  // ties at the top margin: retry moves from the tied set
            for (int i = 0; i < n; ++i)
                if (particles[i].margin == level) {
                    is_survivor[i] = 1;
                    survivors.push_back(i);
                }

        bool all_same = true;
        for (int i = 1; i < n && all_same; ++i) all_same = particles[i].x == particles[0].x;
        if (all_same)
            throw NumericFault("degenerate particle collapse in amls at level " +
                               std::to_string(levels) + " (all particles identical; raise "
                               "mh_steps or proposal_scale)");

        std::vector<int> to_move;
        for (int i = 0; i < n; ++i)
            if (!is_survivor[i]) to_move.push_back(i);

        const double step_scale =
            cfg.proposal_scale * spec.radius * std::pow(rho, static_cast<double>(levels) / d);
        const RngKey choice_key = key.sub(0xa302).sub(levels);
        const RngKey chain_key = key.sub(0xa303).sub(levels);
        std::vector<int> acc(to_move.size(), 0);
        parallel_for(static_cast<std::int64_t>(to_move.size()), threads, [&](std::int64_t k) {
            const int i = to_move[k];
            PhiloxStream choose(choice_key, static_cast<std::uint64_t>(k));
            const int src = survivors[choose.next_below(survivors.size())];
            detail::ChainState st = particles[src];
            PhiloxStream rng(chain_key, static_cast<std::uint64_t>(k));
            acc[k] = detail::mh_chain(net, spec, ref, level, cfg.mh_steps, step_scale, st, rng);
            particles[i] = std::move(st);
        });
        proposals += static_cast<std::int64_t>(to_move.size()) * cfg.mh_steps;
        accepts += std::accumulate(acc.begin(), acc.end(), std::int64_t{0});
        evals += static_cast<std::int64_t>(to_move.size()) * cfg.mh_steps;
    }

    const double p_hat = std::pow(rho, levels) * final_fraction;

    PrEstimate est;
    est.ae_point = p_hat;
    est.pr_point = 1.0 - p_hat;
    est.confidence = confidence;
    est.n_model_evals = evals;
    est.method = "amls";
    est.seed = key.seed;
    est.meta["levels"] = levels;
    est.meta["final_fraction"] = final_fraction;
    est.meta["approximate_ci"] = 1.0;
    if (proposals > 0)
        est.meta["mh_acceptance_rate"] =
            static_cast<double>(accepts) / static_cast<double>(proposals);

    // Log-normal delta-method CI on the product of level fractions
    // (idealized independent-particle variance). Flagged approximate.
    double ae_lo = 0.0, ae_hi = std::pow(rho, levels);
    if (final_fraction > 0.0) {
        const double var_log = levels * (1.0 - rho) / (n * rho) +
                               (1.0 - final_fraction) / (n * final_fraction);
        const double z =
            boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - (1.0 - confidence) / 2.0);
        ae_lo = p_hat * std::exp(-z * std::sqrt(var_log));
        ae_hi = std::min(1.0, p_hat * std::exp(z * std::sqrt(var_log)));
    }
    est.ci_low = std::max(0.0, 1.0 - ae_hi);
    est.ci_high = std::min(1.0, 1.0 - ae_lo);
    est.runtime_ms = sw.elapsed_ms();
    return est;
}

// ---------------------------------------------------------------------------
// Last-particle simulation

// Removes the minimum-margin particle and regenerates it above the removed
// margin via MH from a surviving particle. After M removals reach margin 0,
// the AE proportion estimate is (1-1/N)^M; the CI comes from the Poisson law
// of M (mean N*ln(1/p)).
inline PrEstimate last_particle_estimate(const Network& net, const PerturbSpec& spec,
                                         int n_particles, int mh_steps, std::int64_t max_iters,
                                         RngKey key, double confidence = 0.95,
                                         double proposal_scale = 0.2, int threads = 1) {
    if (n_particles < 2) throw ConfigError("last_particle requires at least 2 particles");
    if (mh_steps < 1) throw ConfigError("mh_steps must be at least 1");
    if (max_iters < 1) throw ConfigError("max_iters must be positive");
    spec.validate();
    const detail::Stopwatch sw;
    const int ref = predict(net, spec.center);
    const int n = n_particles;
    const int d = spec.dim();

    std::vector<detail::ChainState> particles(n);
    const RngKey init_key = key.sub(0x1b01);
    parallel_for(n, threads, [&](std::int64_t i) {
        Vec x = sample(spec, init_key, static_cast<std::uint64_t>(i));
        const detail::PointEval pe = detail::point_eval(net, ref, x);
        particles[i] = {std::move(x), pe.margin, pe.is_ae};
    });
    std::int64_t evals = n + 1;

    const double keep = 1.0 - 1.0 / static_cast<double>(n);
    std::int64_t removals = 0;
    const RngKey step_key = key.sub(0x1b02);
    while (true) {
        int mi = 0;
        for (int i = 1; i < n; ++i)
            if (particles[i].margin < particles[mi].margin) mi = i;
        if (particles[mi].margin >= 0.0) break;
        if (removals >= max_iters)
            throw EventTooRare("event too rare for configuration: last_particle exceeded "
                               "max_iters=" + std::to_string(max_iters));

        const double level = particles[mi].margin;
        std::vector<int> pool;
        for (int i = 0; i < n; ++i)
            if (i != mi && particles[i].margin > level) pool.push_back(i);
        if (pool.empty())
            throw NumericFault("degenerate particle set in last_particle (no particle above "
                               "the removed margin)");

        PhiloxStream rng(step_key, static_cast<std::uint64_t>(removals));
        const int src = pool[rng.next_below(pool.size())];
        detail::ChainState st = particles[src];
        const double frac = std::pow(keep, static_cast<double>(removals));
        const double step_scale =
            proposal_scale * spec.radius * std::pow(frac, 1.0 / static_cast<double>(d));
        detail::mh_chain(net, spec, ref, level, mh_steps, step_scale, st, rng);
        particles[mi] = std::move(st);
        evals += mh_steps;
        ++removals;
    }

    const double p_hat = std::pow(keep, static_cast<double>(removals));

    PrEstimate est;
    est.ae_point = p_hat;
    est.pr_point = 1.0 - p_hat;
    est.confidence = confidence;
    est.n_model_evals = evals;
    est.method = "last_particle";
    est.seed = key.seed;
    est.meta["removals"] = static_cast<double>(removals);
    est.meta["approximate_ci"] = 1.0;

    // Exact Poisson interval on lambda = N*ln(1/p), mapped back to p.
    const double alpha = 1.0 - confidence;
    double lam_lo = 0.0;
    if (removals > 0)
        lam_lo = 0.5 * boost::math::quantile(
                           boost::math::chi_squared_distribution<double>(2.0 * removals),
                           alpha / 2.0);
    const double lam_hi =
        0.5 * boost::math::quantile(
                  boost::math::chi_squared_distribution<double>(2.0 * removals + 2.0),
                  1.0 - alpha / 2.0);
    const double ae_lo = std::exp(-lam_hi / n);
    const double ae_hi = std::exp(-lam_lo / n);
    est.ci_low = std::max(0.0, 1.0 - ae_hi);
    est.ci_high = std::min(1.0, 1.0 - ae_lo);
    est.runtime_ms = sw.elapsed_ms();
    return est;
}

}  // namespace probust
