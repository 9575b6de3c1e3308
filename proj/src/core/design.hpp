#pragma once

#include "dataset.hpp"
#include "nuisance.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace ab {

struct KernelSpec {
    enum class Kind { gaussian, box };
    Kind kind = Kind::gaussian;
    double h = 1.0; // bandwidth > 0

    // K_h(u) = K(u/h)/h; integrates to 1, symmetric.
    double operator()(double u) const;
    void validate() const;
    static Kind parse_kind(const std::string& s);
};

struct PlanAudit {
    int64_t clipped_floor = 0; // own-arm values pinned at the floor
    int64_t clipped_cap = 0;   // own-arm values pinned at 1
    int passes = 0;            // water-filling passes
    bool feasible = true;      // budget met without over-run
    bool fallback_uniform = false;
    double expected_fraction = 0; // mean own-arm probability
    double shortfall = 0;         // unspent budget fraction (never redistributed)
};

// Probabilities for both arms at every unit, plus the unit's own-arm value
// (the one that is sampled and audited).
struct DesignProbabilities {
    std::vector<double> pi0, pi1; // pi(z, x_i) for z = 0, 1
    std::vector<double> pi_own;   // pi(Z_i, x_i)
    PlanAudit audit;
};

struct AnnotationPlan {
    std::vector<double> pi;   // per-unit probability, aligned with the dataset
    std::vector<uint8_t> r;   // realized sampling indicator
    BudgetSpec budget;
    PlanAudit audit;
    double realized_fraction() const;
};

// Empirical plug-in of the estimator's asymptotic variance:
//   Var_n[mu1 - mu0] + sum_z mean_n[sigma2_z / (e_z * pi(z, .))]
// pi(z, unit) must be strictly positive everywhere.
double asymptotic_variance(const Dataset& ds, const NuisanceSet& nuis,
                           const std::function<double(int, const Unit&)>& pi);

// Variance-optimal probabilities under a single global budget:
//   pi*(z,x) = (sqrt(sigma2_z)/e_z) * B / mean_n[sqrt(sigma2_1) + sqrt(sigma2_0)]
// then clipped to [pi_floor, 1] and water-filled so mean_n[pi(Z_i,x_i)] <= B.
DesignProbabilities optimal_pi_global(const Dataset& ds, const NuisanceSet& nuis, double budget,
                                      double pi_floor = 0.01);

// Per-arm budgets (conditional normalizer over units with Z=z).
DesignProbabilities optimal_pi_per_arm(const Dataset& ds, const NuisanceSet& nuis, double b0,
                                       double b1, double pi_floor = 0.01);

// Kernel localization of a generalized propensity around z0:
//   e~_h(z0, x) = integral K_h(z' - z0) e(z', x) dz'
// Adaptive trapezoid to 1e-8 over +-6h (gaussian) or exactly +-h (box).
double kernel_localized_propensity(const std::function<double(double)>& e_of_z,
                                   const KernelSpec& kernel, double z0);

struct ContinuousDesign {
    std::vector<double> pi;            // pi*(z0, x_i)
    std::vector<double> kernel_weight; // K_h(Z_i - z0)
    PlanAudit audit;
};

// Continuous-treatment probabilities at dose z0:
//   pi*(z0,x) proportional to (sqrt(sigma2(z0,x))/e(z0,x)) * sqrt(e(z0,x)/e~_h(z0,x))
// normalized so mean_n[pi * K_h(Z_i - z0)] <= B, values in [pi_floor, 1].
ContinuousDesign optimal_pi_continuous(const Dataset& ds,
                                       const std::function<double(double, const Unit&)>& sigma2,
                                       const std::function<double(double, const Unit&)>& e,
                                       const KernelSpec& kernel, double z0, double budget,
                                       double pi_floor = 0.01);

// Second-batch probability solving kappa*pi1 + (1-kappa)*pi2 = pi_star,
// clamped into [0, 1]; `feasible` is false when clamping occurred.
struct Batch2Probability {
    double pi2 = 0;
    bool feasible = true;
};
Batch2Probability batch2_probability(double pi_star, double kappa, double pi1);

// Optimized-vs-uniform asymptotic variance ratio at equal budget (<= 1).
double relative_efficiency(const Dataset& ds, const NuisanceSet& nuis, double tau_x_variance,
                           double budget);

// Sample variance of mu1(x_i) - mu0(x_i), the Var[tau(X)] plug-in.
double tau_x_sample_variance(const Dataset& ds, const NuisanceSet& nuis);

// Shared water-filling helper (exposed for the campaign's batch-2 rescale):
// scales `values` (already >= 0) by a common factor, pinning entries at
// [floor, cap], so that sum_i weight_i * value_i equals `target` when
// attainable. Entries with weight 0 are clamped but otherwise ignored.
struct WaterFillResult {
    int passes = 0;
    int64_t at_floor = 0, at_cap = 0;
    bool exhausted = true; // target met exactly
    double scale = 1.0;    // final common multiplier applied to free entries
};
WaterFillResult water_fill(std::vector<double>& values, const std::vector<double>& weights,
                           double target, double floor, double cap, int max_passes = 50);

AnnotationPlan sample_plan(const DesignProbabilities& probs, const BudgetSpec& budget,
                           uint64_t seed);

void save_plan(const AnnotationPlan& plan, const Dataset& ds, const std::string& path);
AnnotationPlan load_plan(const std::string& path, const Dataset& ds);

} // namespace ab
