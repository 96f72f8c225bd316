#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "probust/common.hpp"
#include "probust/estimators.hpp"
#include "probust/network.hpp"
#include "probust/perturb.hpp"
#include "probust/rng.hpp"

// Adversarial example search: PGD, the statistical all-AE ball check, and the
// widest-peak inner maximization used by PR-targeted adversarial training
// (find the AE that centers the largest sub-ball consisting entirely of AEs,
// rather than the highest-loss AE).

namespace probust {

struct PgdResult {
    Vec best_point;
    double best_loss = 0.0;
    bool is_ae = false;
};

// Projected gradient ascent on the cross-entropy loss from `restarts` random
// starts plus one start at x. Linf uses sign steps, L2 normalized steps.
inline PgdResult pgd_attack(const Network& net, const Vec& x, int y, double gamma, int steps,
                            double step_size, int restarts, Norm norm, RngKey key,
                            const std::optional<DomainBox>& domain_box = std::nullopt) {
    if (!(gamma > 0.0)) throw ConfigError("pgd requires gamma > 0");
    if (steps < 1 || step_size <= 0.0 || restarts < 0)
        throw ConfigError("pgd requires steps >= 1, step_size > 0, restarts >= 0");
    PerturbSpec ball;
    ball.center = x;
    ball.radius = gamma;
    ball.norm = norm;
    ball.domain_box = domain_box;
    ball.validate();

    const int d = static_cast<int>(x.size());
    PgdResult best;
    const RngKey start_key = key.sub(0x9d01);
    for (int r = 0; r <= restarts; ++r) {
        Vec cur = r == 0 ? x : sample(ball, start_key, static_cast<std::uint64_t>(r - 1));
        for (int s = 0; s < steps; ++s) {
            const Vec g = grad_input(net, cur, y);
            if (norm == Norm::Linf) {
                for (int i = 0; i < d; ++i)
                    cur[i] += step_size * (g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0));
            } else {
                const double gn = norm_l2(g);
                if (gn == 0.0) break;  // flat loss, nothing to climb
                for (int i = 0; i < d; ++i) cur[i] += step_size * g[i] / gn;
            }
            cur = project(ball, cur);
            if (domain_box) cur = clamp_to_box(*domain_box, cur);
        }
        const double l = loss_ce(net, cur, y);
        if (r == 0 || l > best.best_loss) {
            best.best_point = cur;
            best.best_loss = l;
        }
    }
    best.is_ae = predict(net, best.best_point) != y;
    return best;
}

struct AllAeResult {
    bool all_ae = false;
    std::optional<Vec> first_counterexample;
    std::int64_t n = 0;
    double check_confidence = 0.0;
};

// Draws n uniform samples in the k-ball around `center` and reports whether
// every one is an AE relative to reference_label. Statistical, not certified:
// on a pass, the non-AE mass in the ball is below 1-(1-c)^(1/n) with
// confidence c = check_confidence.
inline AllAeResult all_ae_check(const Network& net, const Vec& center, double k,
                                int reference_label, std::int64_t n, RngKey key, Norm norm,
                                double confidence = 0.95,
                                const std::optional<DomainBox>& domain_box = std::nullopt) {
    if (!(k > 0.0)) throw ConfigError("all_ae_check requires k > 0");
    if (n < 1) throw ConfigError("all_ae_check requires n >= 1");
    PerturbSpec ball;
    ball.center = center;
    ball.radius = k;
    ball.norm = norm;
    ball.domain_box = domain_box;
    ball.validate();

    AllAeResult out;
    out.n = n;
    out.check_confidence = confidence;
    out.all_ae = true;
    const RngKey skey = key.sub(0xaec1);
    for (std::int64_t i = 0; i < n; ++i) {
        const Vec p = sample(ball, skey, static_cast<std::uint64_t>(i));
        if (predict(net, p) == reference_label) {
            out.all_ae = false;
            out.first_counterexample = p;
            break;
        }
    }
    return out;
}

struct InnerMaxResult {
    Vec delta;
    double k = 0.0;
    bool found = false;
    Vec candidate;
    std::int64_t check_samples = 0;
    double check_confidence = 0.0;
};

struct InnerMaxConfig {
    double gamma = 0.1;
    Norm norm = Norm::Linf;
    int pgd_steps = 10;
    double pgd_step_size = 0.0;  // 0 -> gamma/4
    int restarts = 5;
    int bisect_iters = 8;
    std::int64_t check_n = 100;
    double check_confidence = 0.95;
    std::optional<DomainBox> domain_box;
};

// Widest-peak search: collect candidate AEs (PGD endpoints plus uniform ball
// draws), score each by the largest radius whose ball passes all_ae_check
// (bisection on (0, gamma], bracketed so monotonicity of the true AE set is
// never assumed), and return the candidate with maximal radius. Ties go to
// the larger margin, then the lower candidate index. A candidate that
// certifies no positive radius does not count as found.
inline InnerMaxResult inner_max_pr(const Network& net, const Vec& x, int y,
                                   const InnerMaxConfig& cfg, RngKey key) {
    if (!(cfg.gamma > 0.0)) throw ConfigError("inner_max_pr requires gamma > 0");
    const double step_size = cfg.pgd_step_size > 0.0 ? cfg.pgd_step_size : cfg.gamma / 4.0;
    const int ref = predict(net, x);

    PerturbSpec ball;
    ball.center = x;
    ball.radius = cfg.gamma;
    ball.norm = cfg.norm;
    ball.domain_box = cfg.domain_box;
    ball.validate();

    std::vector<Vec> candidates;
    for (int r = 0; r < cfg.restarts; ++r) {
        const PgdResult pg = pgd_attack(net, x, y, cfg.gamma, cfg.pgd_steps, step_size, 0,
                                        cfg.norm, key.sub(0xf001).sub(r), cfg.domain_box);
        if (predict(net, pg.best_point) != ref) candidates.push_back(pg.best_point);
    }
    const RngKey ukey = key.sub(0xf002);
    for (int r = 0; r < cfg.restarts; ++r) {
        Vec p = sample(ball, ukey, static_cast<std::uint64_t>(r));
        if (predict(net, p) != ref) candidates.push_back(std::move(p));
    }

    InnerMaxResult out;
    out.check_confidence = cfg.check_confidence;
    if (candidates.empty()) return out;  // robust sample branch

    double best_k = 0.0;
    double best_margin = 0.0;
    int best_idx = -1;
    for (int c = 0; c < static_cast<int>(candidates.size()); ++c) {
        const RngKey ckey = key.sub(0xf003).sub(c);
        double lo = 0.0, hi = cfg.gamma;
        // probe the full radius once, then bisect the bracket
        {
            const AllAeResult r0 = all_ae_check(net, candidates[c], cfg.gamma, ref, cfg.check_n,
                                                ckey.sub(0), cfg.norm, cfg.check_confidence,
                                                cfg.domain_box);
            out.check_samples += cfg.check_n;
            if (r0.all_ae) lo = cfg.gamma;
        }
        for (int it = 0; lo < hi && it < cfg.bisect_iters; ++it) {
            const double mid = 0.5 * (lo + hi);
            const AllAeResult r = all_ae_check(net, candidates[c], mid, ref, cfg.check_n,
                                               ckey.sub(it + 1), cfg.norm, cfg.check_confidence,
                                               cfg.domain_box);
            out.check_samples += cfg.check_n;
            if (r.all_ae)
                lo = mid;
            else
                hi = mid;
        }
        if (lo > 0.0) {
            const double margin = ae_margin(net, ball, ref, candidates[c]);
            if (lo > best_k || (lo == best_k && margin > best_margin)) {
                best_k = lo;
                best_margin = margin;
                best_idx = c;
            }
        }
    }
    if (best_idx < 0) return out;  // AEs exist but none certifies a positive radius

    out.found = true;
    out.k = best_k;
    out.candidate = candidates[best_idx];
    out.delta = sub(out.candidate, x);
    return out;
}

}  // namespace probust
