#include "crossfit.hpp"

#include "csv.hpp"
#include "errors.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>

namespace ab {

int64_t BatchFoldAssignment::batch_count(int which) const {
    int64_t n = 0;
    for (uint8_t b : batch) n += (b == which);
    return n;
}

int64_t BatchFoldAssignment::fold_count(int which, int k) const {
    int64_t n = 0;
    for (size_t i = 0; i < batch.size(); ++i) n += (batch[i] == which && fold[i] == k);
    return n;
}

namespace {

// Deals `ids` into batches and folds in-place on the assignment.
void deal(BatchFoldAssignment& asg, std::vector<int64_t> ids, int folds, double kappa, Rng& rng) {
    rng.shuffle(ids);
    const int64_t n1 = std::llround(kappa * static_cast<double>(ids.size()));
    for (size_t pos = 0; pos < ids.size(); ++pos) {
        const int64_t i = ids[pos];
        asg.batch[static_cast<size_t>(i)] = pos < static_cast<size_t>(n1) ? 1 : 2;
    }
    // Round-robin within each batch keeps fold sizes within one of each other.
    int next_fold_b1 = 0, next_fold_b2 = 0;
    for (size_t pos = 0; pos < ids.size(); ++pos) {
        const int64_t i = ids[pos];
        int& next = asg.batch[static_cast<size_t>(i)] == 1 ? next_fold_b1 : next_fold_b2;
        asg.fold[static_cast<size_t>(i)] = next + 1;
        next = (next + 1) % folds;
    }
}

void check_params(int64_t n, int folds, double kappa) {
    if (folds < 1) throw ConfigError("fold count must be >= 1");
    if (!(kappa > 0 && kappa < 1))
        throw ConfigError("kappa must lie in (0, 1), got " + format_double(kappa));
    if (n < 2 * folds)
        throw DataError("n = " + std::to_string(n) + " too small for K = " + std::to_string(folds) +
                        " folds over two batches");
}

} // namespace

BatchFoldAssignment assign(int64_t n, int folds, double kappa, uint64_t seed) {
    check_params(n, folds, kappa);
    BatchFoldAssignment asg;
    asg.folds = folds;
    asg.kappa = kappa;
    asg.seed = seed;
    asg.batch.resize(static_cast<size_t>(n));
    asg.fold.resize(static_cast<size_t>(n));
    std::vector<int64_t> ids(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) ids[static_cast<size_t>(i)] = i;
    Rng rng(derive_seed(seed, "assign"));
    deal(asg, std::move(ids), folds, kappa, rng);
    return asg;
}

BatchFoldAssignment assign_stratified(const std::vector<int>& arms, int folds, double kappa,
                                      uint64_t seed) {
    const int64_t n = static_cast<int64_t>(arms.size());
    check_params(n, folds, kappa);
    BatchFoldAssignment asg;
    asg.folds = folds;
    asg.kappa = kappa;
    asg.seed = seed;
    asg.batch.resize(static_cast<size_t>(n));
    asg.fold.resize(static_cast<size_t>(n));
    Rng rng(derive_seed(seed, "assign-stratified"));
    for (int arm = 0; arm <= 1; ++arm) {
        std::vector<int64_t> ids;
        for (int64_t i = 0; i < n; ++i)
            if ((arms[static_cast<size_t>(i)] != 0 ? 1 : 0) == arm) ids.push_back(i);
        if (!ids.empty()) deal(asg, std::move(ids), folds, kappa, rng);
    }
    return asg;
}

void save_assignment(const BatchFoldAssignment& asg, const Dataset& ds, const std::string& path) {
    if (static_cast<int64_t>(asg.batch.size()) != ds.size())
        throw DataError("assignment/dataset size mismatch");
    CsvTable t;
    t.header = {"id", "batch", "fold"};
    for (int64_t i = 0; i < ds.size(); ++i)
        t.rows.push_back({std::to_string(ds[i].id), std::to_string(asg.batch[static_cast<size_t>(i)]),
                          std::to_string(asg.fold[static_cast<size_t>(i)])});
    write_csv(path, t);
}

std::vector<int64_t> training_pool(const BatchFoldAssignment& asg, FitStage stage, int fold_k) {
    std::vector<int64_t> pool;
    for (size_t i = 0; i < asg.fold.size(); ++i) {
        if (asg.fold[i] == fold_k) continue;
        if (stage == FitStage::planning && asg.batch[i] != 1) continue;
        pool.push_back(static_cast<int64_t>(i));
    }
    return pool;
}

FoldedNuisances fit_folded(const Dataset& ds, const BatchFoldAssignment& asg, FitStage stage,
                           const NuisanceSpecs& specs, uint64_t seed) {
    if (static_cast<int64_t>(asg.batch.size()) != ds.size())
        throw DataError("assignment/dataset size mismatch");
    FoldedNuisances out;
    out.stage = stage;
    out.fold_of_unit = asg.fold;
    out.by_fold.reserve(static_cast<size_t>(asg.folds));
    for (int k = 1; k <= asg.folds; ++k) {
        std::vector<int64_t> pool = training_pool(asg, stage, k);
        try {
            out.by_fold.push_back(
                fit_nuisances(ds, pool, specs, derive_seed(seed, "fold", static_cast<uint64_t>(k))));
        } catch (const DataError& e) {
            throw DataError("fold " + std::to_string(k) + " complement: " + e.what());
        }
    }
    return out;
}

} // namespace ab
