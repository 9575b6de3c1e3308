#pragma once

#include "campaign.hpp"
#include "dataset.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ab {

// Synthetic generator: X ~ N(0, I_5); Z ~ Bernoulli(logistic of
// -(x2 + x3 + intercept)); heteroskedastic arm variances
//   sigma1^2 = max(v1_base + v1_amp * sin(x1), 0)
//   sigma0^2 = max(v0_base + v0_amp * cos(x3), 0)
// and outcomes Y(0) = 5 + x1 - 2 x2 + eps0, Y(1) = Y(0) + theta0 + eps1 with
// eps_z ~ N(0, sd = sqrt(sigma_z^2)).
struct DgpSpec {
    int64_t n = 1000;
    double theta0 = 3.0; // true ATE
    uint64_t seed = 0;
    double prop_intercept = 0.5;
    double v1_base = 1.3, v1_amp = 0.4;
    double v0_base = 3.5, v0_amp = 0.3;

    static constexpr int d = 5;
};

// Potential outcomes live in a sealed side table. Planning and estimation
// paths never see it; only the simulation oracle and truth metrics may look.
struct SealedOutcomes {
    std::vector<int64_t> ids;
    std::vector<double> y0, y1;

    double sample_ate() const;
    // Observed outcome by id for the realized arms (the annotation oracle's
    // answer sheet).
    std::map<int64_t, double> observed(const Dataset& ds) const;
};

struct SimDraw {
    Dataset data; // no outcomes revealed; mode binary
    SealedOutcomes sealed;
};

SimDraw generate(const DgpSpec& spec);

// True sigma_z^2 / propensity evaluators for oracle-nuisance experiments.
double dgp_sigma2(const DgpSpec& spec, int arm, const Unit& u);
double dgp_propensity1(const DgpSpec& spec, const Unit& u);
double dgp_mu(const DgpSpec& spec, int arm, const Unit& u);

enum class Method { adaptive_aipw, adaptive_rz, uniform, skyline };
std::string to_string(Method m);
Method parse_method(const std::string& s);

struct TrialRow {
    Method method = Method::uniform;
    double budget = 0;
    int trial = 0;
    double estimate = 0;
    double sq_error = 0;
    double ci_width = 0;
    bool covered = false;
    double realized_fraction = 0;
    bool failed = false;
    std::string error;
};

struct AggRow {
    Method method = Method::uniform;
    double budget = 0;
    double mse = 0;
    double mean_log_ci_width = 0;
    double coverage = 0;
    double mean_realized_fraction = 0;
    int64_t trials = 0, failed = 0;
};

struct TrialMetrics {
    std::vector<TrialRow> rows; // fixed order: budget-major, method, trial
};

struct SimConfig {
    DgpSpec dgp;
    std::vector<double> budgets = {0.1, 0.2, 0.3, 0.4};
    std::vector<Method> methods = {Method::adaptive_aipw, Method::adaptive_rz, Method::uniform,
                                   Method::skyline};
    int trials = 100;
    NuisanceSpecs specs;
    int folds = 5;
    double kappa = 0.55;
    double alpha = 0.05;
    double pi_floor = 0.01;
    double validation_split = 0.0; // fraction held out before campaigning
    int threads = 1;
    uint64_t seed = 0;
};

// Deterministic given the config (bitwise, regardless of thread count):
// per-trial campaigns run with child seeds derived from (seed, trial,
// budget); aggregation is order-fixed with compensated summation.
TrialMetrics run_trials(const SimConfig& cfg);

std::vector<AggRow> aggregate(const TrialMetrics& metrics);

struct BudgetSaved {
    double budget = 0;
    double saved = 0;       // (B_u - B) / B_u, clamped at 0
    bool beyond_grid = false; // adaptive width below the uniform curve's range
};

// For each budget of `method`, interpolate the uniform width-vs-budget curve
// to the matching-width budget B_u.
std::vector<BudgetSaved> budget_saved(const std::vector<AggRow>& agg, Method method);

void write_metrics_csv(const TrialMetrics& metrics, const std::string& path);
void write_aggregate_csv(const std::vector<AggRow>& agg, const std::vector<BudgetSaved>& saved_aipw,
                         const std::string& path);

} // namespace ab
