#include "estimator.hpp"

#include "csv.hpp"
#include "errors.hpp"

#include <algorithm>
#include <cmath>

namespace ab {

std::string to_string(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::aipw: return "aipw";
        case EstimatorKind::rz_plugin: return "rz";
        case EstimatorKind::external_weights: return "external";
    }
    return "?";
}

EstimatorKind parse_estimator_kind(const std::string& s) {
    if (s == "aipw") return EstimatorKind::aipw;
    if (s == "rz" || s == "rz-plugin") return EstimatorKind::rz_plugin;
    if (s == "external" || s == "external-weights") return EstimatorKind::external_weights;
    throw ConfigError("unknown estimator '" + s + "' (aipw|rz|external)");
}

double normal_quantile(double alpha) {
    struct Entry {
        double alpha, z;
    };
    static constexpr Entry table[] = {
        {0.01, 2.575829}, {0.02, 2.326348}, {0.05, 1.959964}, {0.10, 1.644854}, {0.20, 1.281552},
    };
    for (const Entry& e : table)
        if (std::abs(alpha - e.alpha) < 1e-12) return e.z;
    throw ConfigError("alpha " + format_double(alpha) +
                      " not in the supported set {0.01, 0.02, 0.05, 0.10, 0.20}");
}

static void check_scorable(const Unit& u) {
    if (u.annotated && !u.outcome)
        throw DataError("unit id " + std::to_string(u.id) + ": R=1 but outcome missing (data corruption)");
}

double aipw_score(const Unit& u, const NuisanceSet& nuis, double pi, int arm) {
    check_scorable(u);
    const double mu = nuis.mu(arm, u);
    if (u.arm() != arm || !u.annotated) return mu;
    if (!(pi > 0 && pi <= 1))
        throw DataError("annotation probability out of (0, 1] for unit id " + std::to_string(u.id));
    return (*u.outcome - mu) / (nuis.e(arm, u) * pi) + mu;
}

double rz_score(const Unit& u, const NuisanceSet& nuis, int arm) {
    check_scorable(u);
    const double mu = nuis.mu(arm, u);
    if (u.arm() != arm || !u.annotated) return mu;
    return (*u.outcome - mu) / nuis.q(arm, u) + mu;
}

double weighted_score(const Unit& u, const NuisanceSet& nuis, double weight, int arm) {
    check_scorable(u);
    if (!(weight >= 0) || !std::isfinite(weight))
        throw DataError("external weight must be finite and nonnegative, unit id " +
                        std::to_string(u.id));
    const double mu = nuis.mu(arm, u);
    if (u.arm() != arm || !u.annotated) return mu;
    return (*u.outcome - mu) * weight + mu;
}

namespace {

EstimateReport assemble(const Dataset& ds, const std::vector<double>& contributions,
                        const EstimateOptions& opts, int64_t clip_events) {
    const int64_t n = ds.size();
    EstimateReport rep;
    rep.kind = opts.kind;
    rep.alpha = opts.alpha;
    rep.n = n;
    rep.clip_events = clip_events;
    rep.n_effective_arm0 = ds.annotated_count(0);
    rep.n_effective_arm1 = ds.annotated_count(1);

    double mean = 0;
    for (double c : contributions) mean += c;
    mean /= static_cast<double>(n);
    double ss = 0;
    for (double c : contributions) ss += (c - mean) * (c - mean);
    rep.tau_hat = mean;
    rep.variance_hat = n > 1 ? ss / static_cast<double>(n - 1) : 0.0;

    const double half = normal_quantile(opts.alpha) * std::sqrt(rep.variance_hat / static_cast<double>(n));
    rep.ci_lo = rep.tau_hat - half;
    rep.ci_hi = rep.tau_hat + half;
    return rep;
}

} // namespace

EstimateReport estimate_ate(const Dataset& ds, const FoldedNuisances& folded,
                            const std::vector<double>& pi, const EstimateOptions& opts) {
    const int64_t n = ds.size();
    if (n == 0) throw DataError("estimate_ate: empty dataset");
    if (static_cast<int64_t>(pi.size()) != n)
        throw DataError("estimate_ate: plan does not cover all units");
    if (ds.annotated_count(0) == 0 || ds.annotated_count(1) == 0)
        throw DataError("estimate_ate: an arm has no annotated units");
    if (opts.kind == EstimatorKind::external_weights)
        throw ConfigError("external-weights estimation goes through estimate_with_external_weights");

    int64_t clip_events = 0;
    std::vector<double> contributions(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const Unit& u = ds[i];
        const NuisanceSet& nuis = folded.for_unit(i);
        double psi1, psi0;
        if (opts.kind == EstimatorKind::rz_plugin) {
            if (!nuis.has_q()) throw ConfigError("rz estimator requires fitted joint scores");
            psi1 = rz_score(u, nuis, 1);
            psi0 = rz_score(u, nuis, 0);
        } else if (opts.weight_cap && u.annotated) {
            const int arm = u.arm();
            const double p = pi[static_cast<size_t>(i)];
            if (!(p > 0 && p <= 1))
                throw DataError("annotation probability out of (0, 1] for unit id " +
                                std::to_string(u.id));
            double w = 1.0 / (nuis.e(arm, u) * p);
            if (w > *opts.weight_cap) {
                w = *opts.weight_cap;
                ++clip_events;
            }
            const double own = weighted_score(u, nuis, w, arm);
            const double other = nuis.mu(1 - arm, u);
            psi1 = arm == 1 ? own : other;
            psi0 = arm == 0 ? own : other;
        } else {
            psi1 = aipw_score(u, nuis, pi[static_cast<size_t>(i)], 1);
            psi0 = aipw_score(u, nuis, pi[static_cast<size_t>(i)], 0);
        }
        contributions[static_cast<size_t>(i)] = psi1 - psi0;
    }
    return assemble(ds, contributions, opts, clip_events);
}

EstimateReport estimate_with_external_weights(const Dataset& ds, const FoldedNuisances& folded,
                                              const std::vector<double>& weights, double alpha) {
    const int64_t n = ds.size();
    if (n == 0) throw DataError("estimate_with_external_weights: empty dataset");
    if (static_cast<int64_t>(weights.size()) != n)
        throw DataError("weights column does not cover all units");
    std::vector<double> contributions(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const Unit& u = ds[i];
        const NuisanceSet& nuis = folded.for_unit(i);
        const double psi1 = weighted_score(u, nuis, weights[static_cast<size_t>(i)], 1);
        const double psi0 = weighted_score(u, nuis, weights[static_cast<size_t>(i)], 0);
        contributions[static_cast<size_t>(i)] = psi1 - psi0;
    }
    EstimateOptions opts;
    opts.kind = EstimatorKind::external_weights;
    opts.alpha = alpha;
    return assemble(ds, contributions, opts, 0);
}

} // namespace ab
