#pragma once

#include "crossfit.hpp"
#include "dataset.hpp"
#include "nuisance.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ab {

enum class EstimatorKind { aipw, rz_plugin, external_weights };

std::string to_string(EstimatorKind kind);
EstimatorKind parse_estimator_kind(const std::string& s);

struct EstimateReport {
    double tau_hat = 0;
    double variance_hat = 0; // sample variance of the per-unit contributions
    double ci_lo = 0, ci_hi = 0;
    double alpha = 0.05;
    int64_t n = 0;
    int64_t n_effective_arm0 = 0, n_effective_arm1 = 0; // annotated counts
    int64_t clip_events = 0;
    EstimatorKind kind = EstimatorKind::aipw;

    double ci_width() const { return ci_hi - ci_lo; }
};

// Two-sided normal quantile for the hard-coded table of common alpha values;
// anything else is a config error.
double normal_quantile(double alpha);

// psi_z for one unit with out-of-fold nuisances:
//   1[Z=z] R (Y - mu_z(x)) / (e_z(x) pi) + mu_z(x)
double aipw_score(const Unit& u, const NuisanceSet& nuis, double pi, int arm);

// RZ-plug-in: 1[Z=z, R=1] (Y - mu_z(x)) / q_z(x) + mu_z(x)
double rz_score(const Unit& u, const NuisanceSet& nuis, int arm);

// External balancing weight w substitutes for 1/(e_z pi).
double weighted_score(const Unit& u, const NuisanceSet& nuis, double weight, int arm);

struct EstimateOptions {
    EstimatorKind kind = EstimatorKind::aipw;
    double alpha = 0.05;
    std::optional<double> weight_cap; // optional clip on 1/(e pi); audited
};

// Cross-fitted ATE: tau_hat = mean_i[psi_1,i - psi_0,i], influence-function
// variance, normal CI. `pi` holds each unit's own-arm annotation probability.
EstimateReport estimate_ate(const Dataset& ds, const FoldedNuisances& folded,
                            const std::vector<double>& pi, const EstimateOptions& opts);

EstimateReport estimate_with_external_weights(const Dataset& ds, const FoldedNuisances& folded,
                                              const std::vector<double>& weights, double alpha);

} // namespace ab
