#pragma once

#include "dataset.hpp"
#include "learners.hpp"

#include <cstdint>
#include <vector>

namespace ab {

// Fitted nuisance functions for one training pool. Evaluation handles the
// floors/clips centrally: sigma2 never falls below sigma2_floor, e0/e1 are
// exact complements inside the clip bounds, q0+q1 <= 1 pointwise.
struct NuisanceSet {
    RegressorPtr mu0, mu1;   // outcome models; inputs are [x] or [x, context]
    bool mu_uses_context = false;
    RegressorPtr s20, s21;   // conditional-variance models on x
    double sigma2_floor = 1e-3;
    ClassifierPtr e1;        // arm-1 propensity, clipped
    ClassifierPtr q1c, q0c;  // optional joint P(Z=z, R=1 | x) classifiers
    double q_floor = 1e-3;
    uint64_t fingerprint = 0; // hash of the training ids

    double mu(int arm, const Unit& u) const;
    double sigma2(int arm, const Unit& u) const;
    double e(int arm, const Unit& u) const;
    double q(int arm, const Unit& u) const;
    bool has_q() const { return q0c && q1c; }
};

// Index-subset view: operations below train on ds restricted to `idx`
// (row indices into ds). Pass all indices for whole-dataset fits.
std::vector<int64_t> all_indices(const Dataset& ds);

Eigen::VectorXd unit_features(const Unit& u, bool with_context);

struct ArmRegressors {
    RegressorPtr m0, m1;
    bool uses_context = false;
};

// Outcome models, one per arm, trained only on annotated units with Z=z.
// With use_context and context columns present, a tabular-only and a
// context-augmented model are fit and combined with a convex weight chosen
// on a held-out 20% split (grid 0, 0.1, ..., 1).
ArmRegressors fit_outcome_models(const Dataset& ds, const std::vector<int64_t>& idx,
                                 const RegressorSpec& spec, bool use_context, uint64_t seed);

// Per-arm regression of squared residuals (Y - mu_z(X))^2 on X; evaluation is
// clamped below at `floor` by NuisanceSet.
ArmRegressors fit_variance_models(const Dataset& ds, const std::vector<int64_t>& idx,
                                  const ArmRegressors& mu, const RegressorSpec& spec,
                                  uint64_t seed);

// P(Z=1 | x) on all rows of the pool (annotation not required).
ClassifierPtr fit_propensity(const Dataset& ds, const std::vector<int64_t>& idx,
                             const ClassifierSpec& spec, uint64_t seed);

// One classifier per arm for the joint indicator 1[Z=z, R=1].
struct RzScores {
    ClassifierPtr q0, q1;
};
RzScores fit_rz_score(const Dataset& ds, const std::vector<int64_t>& idx,
                      const ClassifierSpec& spec, uint64_t seed);

struct NuisanceSpecs {
    RegressorSpec mu;
    RegressorSpec var;
    ClassifierSpec e;
    ClassifierSpec q;
    bool use_context = false;
    bool fit_q = false;
    double sigma2_floor = 1e-3;
    double q_floor = 1e-3;
};

// Convenience: all nuisances for one pool, with the training-id fingerprint.
NuisanceSet fit_nuisances(const Dataset& ds, const std::vector<int64_t>& idx,
                          const NuisanceSpecs& specs, uint64_t seed);

} // namespace ab
