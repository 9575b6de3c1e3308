#pragma once

#include "crossfit.hpp"
#include "dataset.hpp"
#include "design.hpp"
#include "estimator.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace ab {

enum class Phase {
    initialized,
    batch1_requested,
    batch1_labeled,
    planned,
    batch2_requested,
    batch2_labeled,
    finalized
};

std::string to_string(Phase p);
Phase parse_phase(const std::string& s);

// Reveals ground-truth outcomes for requested ids. Ids absent from the
// returned map are pending (deferred annotation). Idempotent: re-requesting
// an id returns the same label.
class AnnotationOracle {
public:
    virtual ~AnnotationOracle() = default;
    virtual std::map<int64_t, double> request(const std::vector<int64_t>& ids) = 0;
};

// In-memory oracle over a sealed outcome table; answers immediately.
class SimulationOracle final : public AnnotationOracle {
public:
    explicit SimulationOracle(std::map<int64_t, double> outcomes)
        : outcomes_(std::move(outcomes)) {}
    std::map<int64_t, double> request(const std::vector<int64_t>& ids) override;

private:
    std::map<int64_t, double> outcomes_;
};

// File-based oracle for human annotation teams: writes `requests.csv` (one
// id column) into the exchange directory and reads labels back from
// `labels.csv` (columns id, y) when it appears. The campaign stays blocked
// until every requested id is labeled.
class FileOracle final : public AnnotationOracle {
public:
    explicit FileOracle(std::string dir) : dir_(std::move(dir)) {}
    std::map<int64_t, double> request(const std::vector<int64_t>& ids) override;

private:
    std::string dir_;
};

struct CampaignConfig {
    BudgetSpec budget;
    int folds = 5;
    double kappa = 0.55;
    uint64_t seed = 0;
    NuisanceSpecs specs;
    double pi_floor = 0.01;
    bool stratified = false;
    bool uniform_design = false; // baseline: batch-2 at B, scoring pi = B
    EstimatorKind estimator = EstimatorKind::aipw;
    double alpha = 0.05;

    void validate() const;
};

// The two-batch protocol as a resumable state machine. Outcomes enter only
// through the oracle: init() strips any outcome columns, so planning can
// never read an unrevealed label.
class Campaign {
public:
    static Campaign init(const Dataset& ds, const CampaignConfig& cfg);

    Phase phase() const { return phase_; }
    const CampaignConfig& config() const { return cfg_; }
    const Dataset& data() const { return ds_; }
    const BatchFoldAssignment& assignment() const { return asg_; }

    // Advances exactly one phase when possible. Label-ingestion phases stay
    // put while the oracle defers; everything else is a pure transition.
    // Returns a short human-readable description of what happened.
    std::string step(AnnotationOracle& oracle);

    // Allowed from batch2-labeled (or re-run after finalized; deterministic).
    EstimateReport finalize();

    // Realized per-unit sampling probabilities (batch 1: B_z, batch 2: pi2).
    const std::vector<double>& plan_probabilities() const { return plan_pi_; }
    const std::vector<uint8_t>& realized() const { return r_; }
    const std::vector<double>& pi_star() const { return pi_star_; }
    double realized_fraction() const;
    double infeasible_fraction() const { return infeasible_fraction_; }
    double budget_shortfall() const { return shortfall_; }
    const std::vector<std::string>& audit_log() const { return audit_; }
    const std::vector<int64_t>& pending_ids() const { return pending_; }
    uint64_t dataset_hash() const { return ds_hash_; }

    // State round-trips through a single JSON document. The dataset itself is
    // referenced by content hash; `base` must be the same dataset handed to
    // init (outcome columns, if any, are ignored — revealed labels live in
    // the state).
    std::string to_json(const std::string& dataset_path = "") const;
    static Campaign from_json(const std::string& json_text, const Dataset& base);
    static std::string dataset_path_of(const std::string& json_text);

private:
    Campaign() = default;

    void sample_batch(int which_batch, AnnotationOracle& oracle);
    void ingest(AnnotationOracle& oracle, Phase next_when_done);
    void plan_batch2();
    void log(const std::string& entry);

    CampaignConfig cfg_;
    Phase phase_ = Phase::initialized;
    Dataset ds_; // outcomes present only for revealed units
    uint64_t ds_hash_ = 0;
    BatchFoldAssignment asg_;
    std::vector<uint8_t> r_;
    std::vector<double> plan_pi_;
    std::vector<double> pi_star_;
    std::vector<int64_t> pending_;
    std::map<int64_t, double> revealed_;
    std::vector<uint64_t> planning_fingerprints_, final_fingerprints_;
    double infeasible_fraction_ = 0;
    double shortfall_ = 0;
    std::vector<std::string> audit_;
};

} // namespace ab
