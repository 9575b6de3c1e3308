#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ab {

enum class TreatmentMode { binary, continuous };

// One observation: covariates, treatment arm, annotation flag, and the
// outcome when (and only when) it has been annotated. Context features are
// precomputed numeric encodings of auxiliary information (e.g. external
// model scores); they never carry the raw embedded outcome itself.
struct Unit {
    int64_t id = 0;
    std::vector<double> covariates;
    std::vector<double> context; // empty when the dataset has no context columns
    double treatment = 0;        // 0/1 in binary mode, real dose in continuous mode
    bool annotated = false;
    std::optional<double> outcome; // present iff annotated

    int arm() const { return treatment != 0.0 ? 1 : 0; }
};

// Immutable after construction; safe to share read-only across workers.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<Unit> units, TreatmentMode mode);

    int64_t size() const { return static_cast<int64_t>(units_.size()); }
    int dim() const { return d_; }
    int context_dim() const { return context_dim_; }
    TreatmentMode mode() const { return mode_; }

    const Unit& operator[](int64_t i) const { return units_[static_cast<size_t>(i)]; }
    const std::vector<Unit>& units() const { return units_; }

    int64_t annotated_count() const;
    int64_t annotated_count(int arm) const;
    int64_t arm_count(int arm) const;

    // Copy with every outcome removed (annotated=false). This is the view
    // handed to planning code so annotation decisions cannot read outcomes.
    Dataset redacted() const;

    // FNV-1a over the canonical CSV encoding of (id, x, context, z) — the
    // outcome-independent identity of the dataset.
    uint64_t content_hash() const;

private:
    std::vector<Unit> units_;
    TreatmentMode mode_ = TreatmentMode::binary;
    int d_ = 0;
    int context_dim_ = 0;
};

struct BudgetSpec {
    enum class Kind { global, per_arm, continuous_local };
    Kind kind = Kind::global;
    double b = 0.3;            // global
    double b0 = 0.3, b1 = 0.3; // per-arm
    double z0 = 0.0, h = 1.0;  // continuous: evaluation dose and bandwidth

    void validate() const; // throws ConfigError

    // Designed batch-1 probability for a unit in arm z (continuous mode uses b).
    double batch1_probability(int arm) const;
};

struct CsvSchema {
    std::string id = "id";
    std::string treatment = "z";
    std::string annotated = "r"; // optional column; inferred from outcome when absent
    std::string outcome = "y";
    std::string covariate_prefix = "x";
    std::string context_prefix = "c";
};

// CSV with header; unannotated outcomes are empty cells (empty y <=> r=0).
Dataset load_dataset(const std::string& path, const CsvSchema& schema = {},
                     TreatmentMode mode = TreatmentMode::binary);
void save_dataset(const Dataset& ds, const std::string& path, const CsvSchema& schema = {});

struct ClipBounds {
    double e_lo = 0.02;
    double e_hi = 0.98;
    double pi_floor = 0.01;
};

struct OverlapReport {
    double e_min = 1, e_max = 0;
    double pi_min = 1;
    int64_t e_below = 0, e_above = 0;
    int64_t pi_below = 0;
    int64_t arm0_count = 0, arm1_count = 0;
};

// Positivity diagnostics over fitted e-hat (arm-1 propensity) and pi-hat
// (annotation probability). Pure; never mutates inputs.
OverlapReport diagnose_overlap(const Dataset& ds,
                               const std::function<double(const Unit&)>& e1_hat,
                               const std::function<double(const Unit&)>& pi_hat,
                               const ClipBounds& bounds = {});

} // namespace ab
