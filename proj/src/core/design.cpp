#include "design.hpp"

#include "csv.hpp"
#include "errors.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace ab {

static constexpr double kPi = 3.14159265358979323846;

double KernelSpec::operator()(double u) const {
    const double t = u / h;
    switch (kind) {
        case Kind::gaussian: return std::exp(-0.5 * t * t) / (std::sqrt(2.0 * kPi) * h);
        case Kind::box: return std::abs(t) <= 1.0 ? 0.5 / h : 0.0;
    }
    return 0;
}

void KernelSpec::validate() const {
    if (!(h > 0)) throw ConfigError("kernel bandwidth must be positive");
}

KernelSpec::Kind KernelSpec::parse_kind(const std::string& s) {
    if (s == "gaussian") return Kind::gaussian;
    if (s == "box") return Kind::box;
    throw ConfigError("unknown kernel '" + s + "' (gaussian|box)");
}

double AnnotationPlan::realized_fraction() const {
    if (r.empty()) return 0;
    int64_t hits = 0;
    for (uint8_t v : r) hits += v;
    return static_cast<double>(hits) / static_cast<double>(r.size());
}

// ---------------------------------------------------------------------------
// Asymptotic variance plug-in
// ---------------------------------------------------------------------------

static double sample_variance(const std::vector<double>& v) {
    const size_t n = v.size();
    if (n < 2) return 0;
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(n);
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return ss / static_cast<double>(n - 1);
}

double asymptotic_variance(const Dataset& ds, const NuisanceSet& nuis,
                           const std::function<double(int, const Unit&)>& pi) {
    const int64_t n = ds.size();
    if (n == 0) throw DataError("asymptotic_variance: empty dataset");
    std::vector<double> tau(static_cast<size_t>(n));
    double pi_term = 0;
    for (int64_t i = 0; i < n; ++i) {
        const Unit& u = ds[i];
        for (int z = 0; z <= 1; ++z) {
            const double p = pi(z, u);
            if (!(p > 0))
                throw DataError("asymptotic_variance: pi(" + std::to_string(z) + ", id=" +
                                std::to_string(u.id) + ") = " + format_double(p) + " is not positive");
            pi_term += nuis.sigma2(z, u) / (nuis.e(z, u) * p);
        }
        tau[static_cast<size_t>(i)] = nuis.mu(1, u) - nuis.mu(0, u);
    }
    return sample_variance(tau) + pi_term / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Water-filling: common-scale solution of the clipped budget problem
// ---------------------------------------------------------------------------

WaterFillResult water_fill(std::vector<double>& values, const std::vector<double>& weights,
                           double target, double floor, double cap, int max_passes) {
    WaterFillResult res;
    const size_t n = values.size();
    std::vector<int8_t> pinned(n, 0); // -1 floor, +1 cap, 0 free
    double scale = 1.0;

    for (res.passes = 1; res.passes <= max_passes; ++res.passes) {
        double fixed_budget = 0, free_mass = 0;
        for (size_t i = 0; i < n; ++i) {
            if (pinned[i] == 1) fixed_budget += weights[i] * cap;
            else if (pinned[i] == -1) fixed_budget += weights[i] * floor;
            else free_mass += weights[i] * values[i];
        }
        const double remaining = target - fixed_budget;
        bool changed = false;
        if (free_mass <= 0 || remaining <= 0) {
            // Nothing left to scale: pin every free entry at the floor.
            for (size_t i = 0; i < n; ++i)
                if (pinned[i] == 0) {
                    pinned[i] = -1;
                    changed = true;
                }
            if (!changed) break;
            continue;
        }
        scale = remaining / free_mass;
        for (size_t i = 0; i < n; ++i) {
            if (pinned[i] != 0) continue;
            const double v = scale * values[i];
            if (v > cap) {
                pinned[i] = 1;
                changed = true;
            } else if (v < floor) {
                pinned[i] = -1;
                changed = true;
            }
        }
        if (!changed) break;
    }

    double spent = 0;
    for (size_t i = 0; i < n; ++i) {
        if (pinned[i] == 1) values[i] = cap;
        else if (pinned[i] == -1) values[i] = floor;
        else values[i] = std::clamp(scale * values[i], floor, cap);
        spent += weights[i] * values[i];
        res.at_floor += (pinned[i] == -1);
        res.at_cap += (pinned[i] == 1);
    }
    res.scale = scale;
    res.exhausted = spent >= target * (1.0 - 1e-9);
    return res;
}

// ---------------------------------------------------------------------------
// Closed-form optimal probabilities
// ---------------------------------------------------------------------------

namespace {

struct RawDesign {
    std::vector<double> raw0, raw1; // sqrt(sigma2_z)/e_z per unit
};

RawDesign raw_shape(const Dataset& ds, const NuisanceSet& nuis) {
    const size_t n = static_cast<size_t>(ds.size());
    RawDesign d;
    d.raw0.resize(n);
    d.raw1.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const Unit& u = ds[static_cast<int64_t>(i)];
        d.raw0[i] = std::sqrt(nuis.sigma2(0, u)) / nuis.e(0, u);
        d.raw1[i] = std::sqrt(nuis.sigma2(1, u)) / nuis.e(1, u);
    }
    return d;
}

// Finishes a design: one water-fill over the stacked (arm-0, arm-1) values,
// where only own-arm entries carry budget weight. Both arms share the common
// multiplier (the closed form is a single scale family across arms).
DesignProbabilities finish_design(const Dataset& ds, std::vector<double> base0,
                                  std::vector<double> base1, double target, double pi_floor) {
    const size_t n = base0.size();
    std::vector<double> stacked(2 * n);
    std::vector<double> weights(2 * n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        stacked[i] = base0[i];
        stacked[n + i] = base1[i];
        weights[ds[static_cast<int64_t>(i)].arm() == 1 ? n + i : i] = 1.0;
    }
    WaterFillResult wf = water_fill(stacked, weights, target, pi_floor, 1.0);

    DesignProbabilities out;
    out.pi0.assign(stacked.begin(), stacked.begin() + static_cast<int64_t>(n));
    out.pi1.assign(stacked.begin() + static_cast<int64_t>(n), stacked.end());
    out.pi_own.resize(n);
    out.audit.passes = wf.passes;
    double spent = 0;
    for (size_t i = 0; i < n; ++i) {
        const bool arm1 = ds[static_cast<int64_t>(i)].arm() == 1;
        out.pi_own[i] = arm1 ? out.pi1[i] : out.pi0[i];
        spent += out.pi_own[i];
        out.audit.clipped_floor += (out.pi_own[i] <= pi_floor);
        out.audit.clipped_cap += (out.pi_own[i] >= 1.0);
    }
    out.audit.expected_fraction = n == 0 ? 0 : spent / static_cast<double>(n);
    out.audit.feasible = spent <= target * (1.0 + 1e-9) + 1e-12;
    out.audit.shortfall = std::max(0.0, (target - spent) / static_cast<double>(n == 0 ? 1 : n));
    return out;
}

} // namespace

DesignProbabilities optimal_pi_global(const Dataset& ds, const NuisanceSet& nuis, double budget,
                                      double pi_floor) {
    if (!(budget > 0 && budget <= 1))
        throw ConfigError("global budget must lie in (0, 1], got " + format_double(budget));
    const int64_t n = ds.size();
    if (n == 0) throw DataError("optimal_pi_global: empty dataset");
    const size_t un = static_cast<size_t>(n);

    if (budget >= 1.0 - 1e-12) {
        DesignProbabilities out;
        out.pi0.assign(un, 1.0);
        out.pi1.assign(un, 1.0);
        out.pi_own.assign(un, 1.0);
        out.audit.expected_fraction = 1.0;
        return out;
    }

    RawDesign raw = raw_shape(ds, nuis);
    double normalizer = 0;
    for (int64_t i = 0; i < n; ++i) {
        const Unit& u = ds[i];
        normalizer += std::sqrt(nuis.sigma2(1, u)) + std::sqrt(nuis.sigma2(0, u));
    }
    normalizer /= static_cast<double>(n);

    DesignProbabilities out;
    if (!(normalizer > 1e-12)) {
        // Degenerate normalizer: report and fall back to uniform-B.
        out.pi0.assign(un, budget);
        out.pi1.assign(un, budget);
        out.pi_own.assign(un, budget);
        out.audit.fallback_uniform = true;
        out.audit.expected_fraction = budget;
        return out;
    }

    std::vector<double> base0(un), base1(un);
    for (size_t i = 0; i < un; ++i) {
        base0[i] = raw.raw0[i] * budget / normalizer;
        base1[i] = raw.raw1[i] * budget / normalizer;
    }
    return finish_design(ds, std::move(base0), std::move(base1),
                         budget * static_cast<double>(n), pi_floor);
}

DesignProbabilities optimal_pi_per_arm(const Dataset& ds, const NuisanceSet& nuis, double b0,
                                       double b1, double pi_floor) {
    for (double b : {b0, b1})
        if (!(b > 0 && b <= 1))
            throw ConfigError("per-arm budget must lie in (0, 1], got " + format_double(b));
    const int64_t n = ds.size();
    if (n == 0) throw DataError("optimal_pi_per_arm: empty dataset");
    const size_t un = static_cast<size_t>(n);
    if (ds.arm_count(0) == 0 || ds.arm_count(1) == 0)
        throw DataError("optimal_pi_per_arm: an arm has no units");

    RawDesign raw = raw_shape(ds, nuis);
    DesignProbabilities out;
    out.pi0.assign(un, 0.0);
    out.pi1.assign(un, 0.0);
    out.pi_own.assign(un, 0.0);

    for (int arm = 0; arm <= 1; ++arm) {
        const double budget = arm == 1 ? b1 : b0;
        const std::vector<double>& raw_arm = arm == 1 ? raw.raw1 : raw.raw0;
        std::vector<double>& pi_arm = arm == 1 ? out.pi1 : out.pi0;

        double normalizer = 0;
        int64_t n_arm = 0;
        for (size_t i = 0; i < un; ++i) {
            if (ds[static_cast<int64_t>(i)].arm() == arm) {
                normalizer += raw_arm[i];
                ++n_arm;
            }
        }
        normalizer /= static_cast<double>(n_arm);

        if (budget >= 1.0 - 1e-12 || !(normalizer > 1e-12)) {
            const double fill = budget >= 1.0 - 1e-12 ? 1.0 : budget;
            if (!(normalizer > 1e-12) && budget < 1.0 - 1e-12) out.audit.fallback_uniform = true;
            for (size_t i = 0; i < un; ++i) pi_arm[i] = fill;
        } else {
            std::vector<double> base(un);
            std::vector<double> weights(un, 0.0);
            for (size_t i = 0; i < un; ++i) {
                base[i] = raw_arm[i] * budget / normalizer;
                if (ds[static_cast<int64_t>(i)].arm() == arm) weights[i] = 1.0;
            }
            WaterFillResult wf =
                water_fill(base, weights, budget * static_cast<double>(n_arm), pi_floor, 1.0);
            out.audit.passes = std::max(out.audit.passes, wf.passes);
            for (size_t i = 0; i < un; ++i) {
                if (ds[static_cast<int64_t>(i)].arm() != arm) continue;
                out.audit.clipped_floor += (base[i] <= pi_floor);
                out.audit.clipped_cap += (base[i] >= 1.0);
            }
            pi_arm = std::move(base);
        }
    }

    double spent = 0;
    for (size_t i = 0; i < un; ++i) {
        const int arm = ds[static_cast<int64_t>(i)].arm();
        out.pi_own[i] = arm == 1 ? out.pi1[i] : out.pi0[i];
        spent += out.pi_own[i];
    }
    out.audit.expected_fraction = spent / static_cast<double>(n);
    out.audit.feasible = true;
    return out;
}

// ---------------------------------------------------------------------------
// Continuous treatments
// ---------------------------------------------------------------------------

namespace {

double trapezoid(const std::function<double(double)>& f, double a, double b, int64_t intervals) {
    const double step = (b - a) / static_cast<double>(intervals);
    double sum = 0.5 * (f(a) + f(b));
    for (int64_t i = 1; i < intervals; ++i) sum += f(a + step * static_cast<double>(i));
    return sum * step;
}

double adaptive_trapezoid(const std::function<double(double)>& f, double a, double b, double tol) {
    int64_t intervals = 8;
    double prev = trapezoid(f, a, b, intervals);
    for (int depth = 0; depth < 24; ++depth) {
        intervals *= 2;
        // Refined estimate reuses the midpoint structure implicitly via full
        // re-evaluation; interval counts stay modest for smooth integrands.
        const double cur = trapezoid(f, a, b, intervals);
        if (std::abs(cur - prev) <= tol * std::max(1.0, std::abs(cur))) return cur;
        prev = cur;
    }
    throw DataError("kernel localization quadrature did not converge");
}

} // namespace

double kernel_localized_propensity(const std::function<double(double)>& e_of_z,
                                   const KernelSpec& kernel, double z0) {
    kernel.validate();
    const double half_width = kernel.kind == KernelSpec::Kind::box ? kernel.h : 6.0 * kernel.h;
    auto integrand = [&](double zp) { return kernel(zp - z0) * e_of_z(zp); };
    return adaptive_trapezoid(integrand, z0 - half_width, z0 + half_width, 1e-8);
}

ContinuousDesign optimal_pi_continuous(const Dataset& ds,
                                       const std::function<double(double, const Unit&)>& sigma2,
                                       const std::function<double(double, const Unit&)>& e,
                                       const KernelSpec& kernel, double z0, double budget,
                                       double pi_floor) {
    kernel.validate();
    if (!(budget > 0 && budget <= 1))
        throw ConfigError("budget must lie in (0, 1], got " + format_double(budget));
    const int64_t n = ds.size();
    if (n == 0) throw DataError("optimal_pi_continuous: empty dataset");
    const size_t un = static_cast<size_t>(n);

    ContinuousDesign out;
    out.pi.resize(un);
    out.kernel_weight.resize(un);
    std::vector<double> raw(un);
    for (size_t i = 0; i < un; ++i) {
        const Unit& u = ds[static_cast<int64_t>(i)];
        const double e_here = e(z0, u);
        if (!(e_here > 0)) throw DataError("generalized propensity must be positive at z0");
        const double e_local =
            kernel_localized_propensity([&](double zp) { return e(zp, u); }, kernel, z0);
        if (!(e_local > 1e-12))
            throw DataError("kernel-localized propensity below floor at unit id " +
                            std::to_string(u.id));
        raw[i] = std::sqrt(sigma2(z0, u)) / e_here * std::sqrt(e_here / e_local);
        out.kernel_weight[i] = kernel(u.treatment - z0);
    }

    double weighted_mass = 0;
    for (size_t i = 0; i < un; ++i) weighted_mass += out.kernel_weight[i] * raw[i];
    if (!(weighted_mass > 1e-12)) {
        // No kernel mass near z0: probabilities are unconstrained by the
        // budget; emit the floor and report.
        out.pi.assign(un, pi_floor);
        out.audit.fallback_uniform = true;
        return out;
    }

    const double target = budget * static_cast<double>(n);
    for (size_t i = 0; i < un; ++i) raw[i] *= target / weighted_mass;
    WaterFillResult wf = water_fill(raw, out.kernel_weight, target, pi_floor, 1.0);
    out.pi = std::move(raw);
    out.audit.passes = wf.passes;
    out.audit.clipped_floor = wf.at_floor;
    out.audit.clipped_cap = wf.at_cap;
    double spent = 0;
    for (size_t i = 0; i < un; ++i) spent += out.kernel_weight[i] * out.pi[i];
    out.audit.expected_fraction = spent / static_cast<double>(n);
    out.audit.feasible = spent <= target * (1.0 + 1e-9) + 1e-12;
    out.audit.shortfall = std::max(0.0, (target - spent) / static_cast<double>(n));
    return out;
}

Batch2Probability batch2_probability(double pi_star, double kappa, double pi1) {
    if (!(kappa > 0 && kappa < 1))
        throw ConfigError("kappa must lie in (0, 1), got " + format_double(kappa));
    Batch2Probability out;
    const double raw = (pi_star - kappa * pi1) / (1.0 - kappa);
    out.pi2 = std::clamp(raw, 0.0, 1.0);
    out.feasible = raw >= -1e-12 && raw <= 1.0 + 1e-12;
    return out;
}

// ---------------------------------------------------------------------------
// Relative efficiency (optimized vs uniform at equal budget)
// ---------------------------------------------------------------------------

double relative_efficiency(const Dataset& ds, const NuisanceSet& nuis, double tau_x_variance,
                           double budget) {
    if (!(budget > 0 && budget <= 1))
        throw ConfigError("budget must lie in (0, 1], got " + format_double(budget));
    const int64_t n = ds.size();
    if (n == 0) throw DataError("relative_efficiency: empty dataset");
    double mean_sqrt = 0, mean_ratio = 0;
    for (const Unit& u : ds.units()) {
        const double s1 = nuis.sigma2(1, u), s0 = nuis.sigma2(0, u);
        mean_sqrt += std::sqrt(s1) + std::sqrt(s0);
        mean_ratio += s1 / nuis.e(1, u) + s0 / nuis.e(0, u);
    }
    mean_sqrt /= static_cast<double>(n);
    mean_ratio /= static_cast<double>(n);
    const double num = mean_sqrt * mean_sqrt / budget + tau_x_variance;
    const double den = mean_ratio / budget + tau_x_variance;
    return num / den;
}

double tau_x_sample_variance(const Dataset& ds, const NuisanceSet& nuis) {
    std::vector<double> tau;
    tau.reserve(static_cast<size_t>(ds.size()));
    for (const Unit& u : ds.units()) tau.push_back(nuis.mu(1, u) - nuis.mu(0, u));
    return sample_variance(tau);
}

// ---------------------------------------------------------------------------
// Plan realization and files
// ---------------------------------------------------------------------------

AnnotationPlan sample_plan(const DesignProbabilities& probs, const BudgetSpec& budget,
                           uint64_t seed) {
    AnnotationPlan plan;
    plan.pi = probs.pi_own;
    plan.budget = budget;
    plan.audit = probs.audit;
    plan.r.resize(plan.pi.size());
    Rng rng(derive_seed(seed, "plan-sample"));
    for (size_t i = 0; i < plan.pi.size(); ++i) plan.r[i] = rng.bernoulli(plan.pi[i]) ? 1 : 0;
    return plan;
}

void save_plan(const AnnotationPlan& plan, const Dataset& ds, const std::string& path) {
    if (static_cast<int64_t>(plan.pi.size()) != ds.size())
        throw DataError("plan/dataset size mismatch");
    CsvTable t;
    t.header = {"id", "pi", "r"};
    for (int64_t i = 0; i < ds.size(); ++i)
        t.rows.push_back({std::to_string(ds[i].id), format_double(plan.pi[static_cast<size_t>(i)]),
                          plan.r[static_cast<size_t>(i)] ? "1" : "0"});
    write_csv(path, t);
}

AnnotationPlan load_plan(const std::string& path, const Dataset& ds) {
    CsvTable t = read_csv(path);
    const int id_col = t.column("id"), pi_col = t.column("pi"), r_col = t.column("r");
    if (id_col < 0 || pi_col < 0 || r_col < 0)
        throw DataError(path + ": plan requires columns id, pi, r");
    std::unordered_map<int64_t, std::pair<double, uint8_t>> by_id;
    for (size_t i = 0; i < t.rows.size(); ++i) {
        auto id = parse_int(t.rows[i][static_cast<size_t>(id_col)]);
        auto pi = parse_double(t.rows[i][static_cast<size_t>(pi_col)]);
        auto r = parse_int(t.rows[i][static_cast<size_t>(r_col)]);
        if (!id || !pi || !r || (*r != 0 && *r != 1))
            throw DataError(path + ": bad plan row " + std::to_string(i + 1));
        by_id[*id] = {*pi, static_cast<uint8_t>(*r)};
    }
    AnnotationPlan plan;
    plan.pi.reserve(static_cast<size_t>(ds.size()));
    plan.r.reserve(static_cast<size_t>(ds.size()));
    for (const Unit& u : ds.units()) {
        auto it = by_id.find(u.id);
        if (it == by_id.end())
            throw DataError(path + ": plan does not cover unit id " + std::to_string(u.id));
        plan.pi.push_back(it->second.first);
        plan.r.push_back(it->second.second);
    }
    return plan;
}

} // namespace ab
