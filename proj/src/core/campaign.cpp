#include "campaign.hpp"

#include "csv.hpp"
#include "errors.hpp"
#include "rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

namespace ab {

using nlohmann::json;

std::string to_string(Phase p) {
    switch (p) {
        case Phase::initialized: return "initialized";
        case Phase::batch1_requested: return "batch1-requested";
        case Phase::batch1_labeled: return "batch1-labeled";
        case Phase::planned: return "planned";
        case Phase::batch2_requested: return "batch2-requested";
        case Phase::batch2_labeled: return "batch2-labeled";
        case Phase::finalized: return "finalized";
    }
    return "?";
}

Phase parse_phase(const std::string& s) {
    for (int p = 0; p <= static_cast<int>(Phase::finalized); ++p)
        if (to_string(static_cast<Phase>(p)) == s) return static_cast<Phase>(p);
    throw DataError("unknown campaign phase '" + s + "'");
}

std::map<int64_t, double> SimulationOracle::request(const std::vector<int64_t>& ids) {
    std::map<int64_t, double> out;
    for (int64_t id : ids) {
        auto it = outcomes_.find(id);
        if (it == outcomes_.end())
            throw DataError("simulation oracle has no outcome for id " + std::to_string(id));
        out[id] = it->second;
    }
    return out;
}

std::map<int64_t, double> FileOracle::request(const std::vector<int64_t>& ids) {
    namespace fs = std::filesystem;
    fs::create_directories(dir_);
    CsvTable req;
    req.header = {"id"};
    for (int64_t id : ids) req.rows.push_back({std::to_string(id)});
    write_csv((fs::path(dir_) / "requests.csv").string(), req);

    std::map<int64_t, double> out;
    const fs::path labels = fs::path(dir_) / "labels.csv";
    if (!fs::exists(labels)) return out;
    CsvTable t = read_csv(labels.string());
    const int id_col = t.column("id"), y_col = t.column("y");
    if (id_col < 0 || y_col < 0) throw DataError(labels.string() + ": needs columns id, y");
    std::map<int64_t, double> available;
    for (size_t i = 0; i < t.rows.size(); ++i) {
        auto id = parse_int(t.rows[i][static_cast<size_t>(id_col)]);
        auto y = parse_double(t.rows[i][static_cast<size_t>(y_col)]);
        if (!id || !y) throw DataError(labels.string() + ": bad row " + std::to_string(i + 1));
        available[*id] = *y;
    }
    for (int64_t id : ids) {
        auto it = available.find(id);
        if (it != available.end()) out[id] = it->second;
    }
    return out;
}

void CampaignConfig::validate() const {
    budget.validate();
    if (budget.kind == BudgetSpec::Kind::continuous_local)
        throw ConfigError("campaigns support global and per-arm budgets");
    if (!(kappa > 0 && kappa < 1)) throw ConfigError("kappa must lie in (0, 1)");
    if (folds < 1) throw ConfigError("fold count must be >= 1");
    if (!(pi_floor >= 0 && pi_floor < 1)) throw ConfigError("pi floor must lie in [0, 1)");
}

void Campaign::log(const std::string& entry) { audit_.push_back(entry); }

Campaign Campaign::init(const Dataset& ds, const CampaignConfig& cfg) {
    cfg.validate();
    if (ds.size() == 0) throw DataError("campaign needs a non-empty dataset");
    Campaign c;
    c.cfg_ = cfg;
    c.ds_ = ds.redacted(); // unrevealed outcomes never enter the campaign
    c.ds_hash_ = c.ds_.content_hash();
    if (cfg.stratified) {
        std::vector<int> arms(static_cast<size_t>(ds.size()));
        for (int64_t i = 0; i < ds.size(); ++i) arms[static_cast<size_t>(i)] = ds[i].arm();
        c.asg_ = assign_stratified(arms, cfg.folds, cfg.kappa, cfg.seed);
    } else {
        c.asg_ = assign(ds.size(), cfg.folds, cfg.kappa, cfg.seed);
    }
    c.r_.assign(static_cast<size_t>(ds.size()), 0);
    c.plan_pi_.assign(static_cast<size_t>(ds.size()), 0.0);
    c.pi_star_.assign(static_cast<size_t>(ds.size()), 0.0);
    c.phase_ = Phase::initialized;
    c.log("initialized: n=" + std::to_string(ds.size()) +
          " batch1=" + std::to_string(c.asg_.batch_count(1)) +
          " folds=" + std::to_string(cfg.folds));
    return c;
}

void Campaign::sample_batch(int which_batch, AnnotationOracle& oracle) {
    Rng rng(derive_seed(cfg_.seed, which_batch == 1 ? "batch1-sample" : "batch2-sample"));
    std::vector<int64_t> request_ids;
    for (int64_t i = 0; i < ds_.size(); ++i) {
        if (asg_.batch[static_cast<size_t>(i)] != which_batch) continue;
        const double p = which_batch == 1 ? cfg_.budget.batch1_probability(ds_[i].arm())
                                          : plan_pi_[static_cast<size_t>(i)];
        if (which_batch == 1) plan_pi_[static_cast<size_t>(i)] = p;
        if (rng.bernoulli(p)) {
            r_[static_cast<size_t>(i)] = 1;
            request_ids.push_back(ds_[i].id);
        }
    }
    pending_ = request_ids;
    log("batch" + std::to_string(which_batch) + " sampled: requested " +
        std::to_string(request_ids.size()) + " annotations");
    ingest(oracle, which_batch == 1 ? Phase::batch1_labeled : Phase::batch2_labeled);
    if (phase_ != Phase::batch1_labeled && phase_ != Phase::batch2_labeled)
        phase_ = which_batch == 1 ? Phase::batch1_requested : Phase::batch2_requested;
}

void Campaign::ingest(AnnotationOracle& oracle, Phase next_when_done) {
    std::map<int64_t, double> labels = oracle.request(pending_);
    if (!labels.empty()) {
        std::vector<Unit> units = ds_.units();
        std::map<int64_t, size_t> index_by_id;
        for (size_t i = 0; i < units.size(); ++i) index_by_id[units[i].id] = i;
        for (const auto& [id, y] : labels) {
            auto it = index_by_id.find(id);
            if (it == index_by_id.end())
                throw DataError("oracle returned label for unknown id " + std::to_string(id));
            Unit& u = units[it->second];
            if (u.annotated && *u.outcome != y)
                throw DataError("oracle changed the label of id " + std::to_string(id));
            u.annotated = true;
            u.outcome = y;
            revealed_[id] = y;
        }
        ds_ = Dataset(std::move(units), ds_.mode());
        std::vector<int64_t> still;
        for (int64_t id : pending_)
            if (!labels.count(id)) still.push_back(id);
        pending_ = std::move(still);
    }
    if (pending_.empty()) {
        phase_ = next_when_done;
        log("labels complete: " + std::to_string(revealed_.size()) + " revealed");
    }
}

void Campaign::plan_batch2() {
    const int64_t n = ds_.size();
    int64_t infeasible = 0, batch2_n = 0;
    if (!cfg_.uniform_design) {
        FoldedNuisances folded = fit_folded(ds_, asg_, FitStage::planning, cfg_.specs,
                                            derive_seed(cfg_.seed, "plan-fit"));
        planning_fingerprints_.clear();
        for (const auto& set : folded.by_fold) planning_fingerprints_.push_back(set.fingerprint);
        for (int k = 1; k <= cfg_.folds; ++k) {
            const NuisanceSet& nuis = folded.by_fold[static_cast<size_t>(k - 1)];
            DesignProbabilities design;
            if (cfg_.budget.kind == BudgetSpec::Kind::per_arm)
                design = optimal_pi_per_arm(ds_, nuis, cfg_.budget.b0, cfg_.budget.b1, cfg_.pi_floor);
            else
                design = optimal_pi_global(ds_, nuis, cfg_.budget.b, cfg_.pi_floor);
            for (int64_t i = 0; i < n; ++i)
                if (asg_.fold[static_cast<size_t>(i)] == k)
                    pi_star_[static_cast<size_t>(i)] = design.pi_own[static_cast<size_t>(i)];
        }
    }

    for (int64_t i = 0; i < n; ++i) {
        if (asg_.batch[static_cast<size_t>(i)] != 2) continue;
        ++batch2_n;
        const double b1 = cfg_.budget.batch1_probability(ds_[i].arm());
        if (cfg_.uniform_design) {
            plan_pi_[static_cast<size_t>(i)] = b1;
            continue;
        }
        Batch2Probability p2 =
            batch2_probability(pi_star_[static_cast<size_t>(i)], cfg_.kappa, b1);
        plan_pi_[static_cast<size_t>(i)] = p2.pi2;
        infeasible += !p2.feasible;
    }
    infeasible_fraction_ = batch2_n == 0 ? 0 : static_cast<double>(infeasible) / static_cast<double>(batch2_n);

    // Clamping at zero overspends the mixture; rescale batch-2 probabilities
    // down so the realized plan meets the budget audit. Underspend (clamping
    // at one) is logged as shortfall and never redistributed.
    shortfall_ = 0;
    auto enforce = [&](int arm_filter, double budget_value) {
        std::vector<double> values;
        std::vector<int64_t> where;
        double batch1_spend = 0;
        int64_t arm_n = 0;
        for (int64_t i = 0; i < n; ++i) {
            if (arm_filter >= 0 && ds_[i].arm() != arm_filter) continue;
            ++arm_n;
            if (asg_.batch[static_cast<size_t>(i)] == 1)
                batch1_spend += plan_pi_[static_cast<size_t>(i)];
            else {
                values.push_back(plan_pi_[static_cast<size_t>(i)]);
                where.push_back(i);
            }
        }
        const double target = budget_value * static_cast<double>(arm_n) - batch1_spend;
        double spend = 0;
        for (double v : values) spend += v;
        if (spend > target) {
            std::vector<double> weights(values.size(), 1.0);
            water_fill(values, weights, std::max(target, 0.0), 0.0, 1.0);
            for (size_t j = 0; j < where.size(); ++j)
                plan_pi_[static_cast<size_t>(where[j])] = values[j];
        } else {
            shortfall_ += (target - spend) / static_cast<double>(n);
        }
    };
    if (cfg_.budget.kind == BudgetSpec::Kind::per_arm) {
        enforce(0, cfg_.budget.b0);
        enforce(1, cfg_.budget.b1);
    } else {
        enforce(-1, cfg_.budget.b);
    }

    std::ostringstream msg;
    msg << "planned: batch-2 probabilities set, infeasible_fraction="
        << format_double(infeasible_fraction_) << " shortfall=" << format_double(shortfall_);
    log(msg.str());
    phase_ = Phase::planned;
}

std::string Campaign::step(AnnotationOracle& oracle) {
    const Phase before = phase_;
    switch (phase_) {
        case Phase::initialized: sample_batch(1, oracle); break;
        case Phase::batch1_requested: ingest(oracle, Phase::batch1_labeled); break;
        case Phase::batch1_labeled: plan_batch2(); break;
        case Phase::planned: sample_batch(2, oracle); break;
        case Phase::batch2_requested: ingest(oracle, Phase::batch2_labeled); break;
        case Phase::batch2_labeled:
            throw PhaseError("campaign is ready to finalize; call finalize");
        case Phase::finalized: throw PhaseError("campaign already finalized");
    }
    std::ostringstream msg;
    msg << to_string(before) << " -> " << to_string(phase_);
    if (!pending_.empty()) msg << " (waiting on " << pending_.size() << " labels)";
    return msg.str();
}

EstimateReport Campaign::finalize() {
    if (phase_ != Phase::batch2_labeled && phase_ != Phase::finalized)
        throw PhaseError("finalize requires phase batch2-labeled, campaign is at " +
                         to_string(phase_));

    NuisanceSpecs specs = cfg_.specs;
    specs.fit_q = specs.fit_q || cfg_.estimator == EstimatorKind::rz_plugin;
    FoldedNuisances folded =
        fit_folded(ds_, asg_, FitStage::final_pooled, specs, derive_seed(cfg_.seed, "final-fit"));
    final_fingerprints_.clear();
    for (const auto& set : folded.by_fold) final_fingerprints_.push_back(set.fingerprint);

    const int64_t n = ds_.size();
    std::vector<double> score_pi(static_cast<size_t>(n));
    if (cfg_.uniform_design) {
        for (int64_t i = 0; i < n; ++i)
            score_pi[static_cast<size_t>(i)] = cfg_.budget.batch1_probability(ds_[i].arm());
    } else {
        for (int k = 1; k <= cfg_.folds; ++k) {
            const NuisanceSet& nuis = folded.by_fold[static_cast<size_t>(k - 1)];
            DesignProbabilities design;
            if (cfg_.budget.kind == BudgetSpec::Kind::per_arm)
                design = optimal_pi_per_arm(ds_, nuis, cfg_.budget.b0, cfg_.budget.b1, cfg_.pi_floor);
            else
                design = optimal_pi_global(ds_, nuis, cfg_.budget.b, cfg_.pi_floor);
            for (int64_t i = 0; i < n; ++i)
                if (asg_.fold[static_cast<size_t>(i)] == k)
                    score_pi[static_cast<size_t>(i)] = design.pi_own[static_cast<size_t>(i)];
        }
    }

    EstimateOptions opts;
    opts.kind = cfg_.estimator;
    opts.alpha = cfg_.alpha;
    EstimateReport rep = estimate_ate(ds_, folded, score_pi, opts);
    phase_ = Phase::finalized;
    log("finalized: tau_hat=" + format_double(rep.tau_hat));
    return rep;
}

double Campaign::realized_fraction() const {
    if (r_.empty()) return 0;
    int64_t hits = 0;
    for (uint8_t v : r_) hits += v;
    return static_cast<double>(hits) / static_cast<double>(r_.size());
}

// ---------------------------------------------------------------------------
// State serialization
// ---------------------------------------------------------------------------

namespace {

std::string estimator_name(EstimatorKind k) { return to_string(k); }

json config_to_json(const CampaignConfig& cfg) {
    json j;
    switch (cfg.budget.kind) {
        case BudgetSpec::Kind::global: j["budget"]["kind"] = "global"; break;
        case BudgetSpec::Kind::per_arm: j["budget"]["kind"] = "per-arm"; break;
        case BudgetSpec::Kind::continuous_local: j["budget"]["kind"] = "continuous"; break;
    }
    j["budget"]["b"] = cfg.budget.b;
    j["budget"]["b0"] = cfg.budget.b0;
    j["budget"]["b1"] = cfg.budget.b1;
    j["folds"] = cfg.folds;
    j["kappa"] = cfg.kappa;
    j["seed"] = cfg.seed;
    j["pi_floor"] = cfg.pi_floor;
    j["stratified"] = cfg.stratified;
    j["uniform_design"] = cfg.uniform_design;
    j["estimator"] = estimator_name(cfg.estimator);
    j["alpha"] = cfg.alpha;
    j["specs"]["mu_kind"] = static_cast<int>(cfg.specs.mu.kind);
    j["specs"]["mu_lambda"] = cfg.specs.mu.ridge_lambda;
    j["specs"]["mu_knn_k"] = cfg.specs.mu.knn_k;
    j["specs"]["mu_trees"] = cfg.specs.mu.trees;
    j["specs"]["mu_max_depth"] = cfg.specs.mu.max_depth;
    j["specs"]["mu_min_leaf"] = cfg.specs.mu.min_leaf;
    j["specs"]["var_kind"] = static_cast<int>(cfg.specs.var.kind);
    j["specs"]["var_lambda"] = cfg.specs.var.ridge_lambda;
    j["specs"]["var_knn_k"] = cfg.specs.var.knn_k;
    j["specs"]["var_trees"] = cfg.specs.var.trees;
    j["specs"]["var_max_depth"] = cfg.specs.var.max_depth;
    j["specs"]["var_min_leaf"] = cfg.specs.var.min_leaf;
    j["specs"]["e_kind"] = static_cast<int>(cfg.specs.e.kind);
    j["specs"]["e_tol"] = cfg.specs.e.tol;
    j["specs"]["e_max_iter"] = cfg.specs.e.max_iter;
    j["specs"]["e_clip_lo"] = cfg.specs.e.clip_lo;
    j["specs"]["e_clip_hi"] = cfg.specs.e.clip_hi;
    j["specs"]["q_kind"] = static_cast<int>(cfg.specs.q.kind);
    j["specs"]["q_tol"] = cfg.specs.q.tol;
    j["specs"]["q_max_iter"] = cfg.specs.q.max_iter;
    j["specs"]["q_clip_lo"] = cfg.specs.q.clip_lo;
    j["specs"]["q_clip_hi"] = cfg.specs.q.clip_hi;
    j["specs"]["use_context"] = cfg.specs.use_context;
    j["specs"]["fit_q"] = cfg.specs.fit_q;
    j["specs"]["sigma2_floor"] = cfg.specs.sigma2_floor;
    j["specs"]["q_floor"] = cfg.specs.q_floor;
    return j;
}

CampaignConfig config_from_json(const json& j) {
    CampaignConfig cfg;
    const std::string kind = j.at("budget").at("kind").get<std::string>();
    if (kind == "global") cfg.budget.kind = BudgetSpec::Kind::global;
    else if (kind == "per-arm") cfg.budget.kind = BudgetSpec::Kind::per_arm;
    else cfg.budget.kind = BudgetSpec::Kind::continuous_local;
    cfg.budget.b = j.at("budget").at("b").get<double>();
    cfg.budget.b0 = j.at("budget").at("b0").get<double>();
    cfg.budget.b1 = j.at("budget").at("b1").get<double>();
    cfg.folds = j.at("folds").get<int>();
    cfg.kappa = j.at("kappa").get<double>();
    cfg.seed = j.at("seed").get<uint64_t>();
    cfg.pi_floor = j.at("pi_floor").get<double>();
    cfg.stratified = j.at("stratified").get<bool>();
    cfg.uniform_design = j.at("uniform_design").get<bool>();
    cfg.estimator = parse_estimator_kind(j.at("estimator").get<std::string>());
    cfg.alpha = j.at("alpha").get<double>();
    const json& s = j.at("specs");
    cfg.specs.mu.kind = static_cast<RegressorSpec::Kind>(s.at("mu_kind").get<int>());
    cfg.specs.mu.ridge_lambda = s.at("mu_lambda").get<double>();
    cfg.specs.mu.knn_k = s.at("mu_knn_k").get<int>();
    cfg.specs.mu.trees = s.at("mu_trees").get<int>();
    cfg.specs.mu.max_depth = s.at("mu_max_depth").get<int>();
    cfg.specs.mu.min_leaf = s.at("mu_min_leaf").get<int>();
    cfg.specs.var.kind = static_cast<RegressorSpec::Kind>(s.at("var_kind").get<int>());
    cfg.specs.var.ridge_lambda = s.at("var_lambda").get<double>();
    cfg.specs.var.knn_k = s.at("var_knn_k").get<int>();
    cfg.specs.var.trees = s.at("var_trees").get<int>();
    cfg.specs.var.max_depth = s.at("var_max_depth").get<int>();
    cfg.specs.var.min_leaf = s.at("var_min_leaf").get<int>();
    cfg.specs.e.kind = static_cast<ClassifierSpec::Kind>(s.at("e_kind").get<int>());
    cfg.specs.e.tol = s.at("e_tol").get<double>();
    cfg.specs.e.max_iter = s.at("e_max_iter").get<int>();
    cfg.specs.e.clip_lo = s.at("e_clip_lo").get<double>();
    cfg.specs.e.clip_hi = s.at("e_clip_hi").get<double>();
    cfg.specs.q.kind = static_cast<ClassifierSpec::Kind>(s.at("q_kind").get<int>());
    cfg.specs.q.tol = s.at("q_tol").get<double>();
    cfg.specs.q.max_iter = s.at("q_max_iter").get<int>();
    cfg.specs.q.clip_lo = s.at("q_clip_lo").get<double>();
    cfg.specs.q.clip_hi = s.at("q_clip_hi").get<double>();
    cfg.specs.use_context = s.at("use_context").get<bool>();
    cfg.specs.fit_q = s.at("fit_q").get<bool>();
    cfg.specs.sigma2_floor = s.at("sigma2_floor").get<double>();
    cfg.specs.q_floor = s.at("q_floor").get<double>();
    return cfg;
}

} // namespace

std::string Campaign::to_json(const std::string& dataset_path) const {
    json j;
    j["schema"] = "annobatch-campaign-v1";
    j["phase"] = ab::to_string(phase_);
    j["config"] = config_to_json(cfg_);
    j["dataset_path"] = dataset_path;
    j["dataset_hash"] = ds_hash_;
    j["batch"] = asg_.batch;
    j["fold"] = asg_.fold;
    j["r"] = r_;
    j["plan_pi"] = plan_pi_;
    j["pi_star"] = pi_star_;
    j["pending"] = pending_;
    json labels = json::object();
    for (const auto& [id, y] : revealed_) labels[std::to_string(id)] = y;
    j["revealed"] = labels;
    j["planning_fingerprints"] = planning_fingerprints_;
    j["final_fingerprints"] = final_fingerprints_;
    j["infeasible_fraction"] = infeasible_fraction_;
    j["shortfall"] = shortfall_;
    j["audit"] = audit_;
    return j.dump(2);
}

std::string Campaign::dataset_path_of(const std::string& json_text) {
    json j = json::parse(json_text);
    return j.at("dataset_path").get<std::string>();
}

Campaign Campaign::from_json(const std::string& json_text, const Dataset& base) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const std::exception& e) {
        throw DataError(std::string("bad campaign state: ") + e.what());
    }
    if (j.value("schema", "") != "annobatch-campaign-v1")
        throw DataError("not an annobatch campaign state file");

    Campaign c;
    c.cfg_ = config_from_json(j.at("config"));
    c.ds_ = base.redacted();
    c.ds_hash_ = c.ds_.content_hash();
    if (c.ds_hash_ != j.at("dataset_hash").get<uint64_t>())
        throw DataError("dataset content hash mismatch; state belongs to a different dataset");

    c.phase_ = parse_phase(j.at("phase").get<std::string>());
    c.asg_.folds = c.cfg_.folds;
    c.asg_.kappa = c.cfg_.kappa;
    c.asg_.seed = c.cfg_.seed;
    c.asg_.batch = j.at("batch").get<std::vector<uint8_t>>();
    c.asg_.fold = j.at("fold").get<std::vector<int>>();
    c.r_ = j.at("r").get<std::vector<uint8_t>>();
    c.plan_pi_ = j.at("plan_pi").get<std::vector<double>>();
    c.pi_star_ = j.at("pi_star").get<std::vector<double>>();
    c.pending_ = j.at("pending").get<std::vector<int64_t>>();
    for (const auto& [key, value] : j.at("revealed").items())
        c.revealed_[*parse_int(key)] = value.get<double>();
    c.planning_fingerprints_ = j.at("planning_fingerprints").get<std::vector<uint64_t>>();
    c.final_fingerprints_ = j.at("final_fingerprints").get<std::vector<uint64_t>>();
    c.infeasible_fraction_ = j.at("infeasible_fraction").get<double>();
    c.shortfall_ = j.at("shortfall").get<double>();
    c.audit_ = j.at("audit").get<std::vector<std::string>>();

    if (c.r_.size() != static_cast<size_t>(base.size()) ||
        c.asg_.batch.size() != c.r_.size() || c.asg_.fold.size() != c.r_.size())
        throw DataError("campaign state arrays do not match the dataset size");

    // Re-apply revealed labels onto the redacted dataset.
    if (!c.revealed_.empty()) {
        std::vector<Unit> units = c.ds_.units();
        std::map<int64_t, size_t> index_by_id;
        for (size_t i = 0; i < units.size(); ++i) index_by_id[units[i].id] = i;
        for (const auto& [id, y] : c.revealed_) {
            auto it = index_by_id.find(id);
            if (it == index_by_id.end())
                throw DataError("state refers to unknown unit id " + std::to_string(id));
            units[it->second].annotated = true;
            units[it->second].outcome = y;
        }
        c.ds_ = Dataset(std::move(units), c.ds_.mode());
    }
    return c;
}

} // namespace ab
