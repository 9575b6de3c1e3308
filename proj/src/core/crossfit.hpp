#pragma once

#include "dataset.hpp"
#include "nuisance.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ab {

// Two-batch, K-fold partition: batch sizes follow kappa (|batch 1| =
// round(kappa * n)), folds within each batch differ in size by at most one.
struct BatchFoldAssignment {
    int folds = 0;
    double kappa = 0;
    uint64_t seed = 0;
    std::vector<uint8_t> batch; // per unit, 1 or 2
    std::vector<int> fold;      // per unit, 1..K

    int64_t batch_count(int which) const;
    int64_t fold_count(int which, int k) const; // units in (batch, fold)
};

BatchFoldAssignment assign(int64_t n, int folds, double kappa, uint64_t seed);

// Stratified variant: the batch split and fold deal happen within each arm,
// for small-n robustness.
BatchFoldAssignment assign_stratified(const std::vector<int>& arms, int folds, double kappa,
                                      uint64_t seed);

void save_assignment(const BatchFoldAssignment& asg, const Dataset& ds, const std::string& path);

enum class FitStage {
    planning,    // train on batch-1 units outside fold k
    final_pooled // train on all units outside fold k
};

// One NuisanceSet per fold, each trained with fold k excluded. Evaluating a
// unit always goes through the set whose excluded fold contains it.
struct FoldedNuisances {
    FitStage stage = FitStage::planning;
    std::vector<NuisanceSet> by_fold; // index k-1
    std::vector<int> fold_of_unit;    // 1..K per unit

    const NuisanceSet& for_unit(int64_t i) const {
        return by_fold[static_cast<size_t>(fold_of_unit[static_cast<size_t>(i)] - 1)];
    }
};

FoldedNuisances fit_folded(const Dataset& ds, const BatchFoldAssignment& asg, FitStage stage,
                           const NuisanceSpecs& specs, uint64_t seed);

// Training pool for fold k at the given stage (indices into ds).
std::vector<int64_t> training_pool(const BatchFoldAssignment& asg, FitStage stage, int fold_k);

} // namespace ab
