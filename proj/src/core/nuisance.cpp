#include "nuisance.hpp"

#include "errors.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ab {

std::vector<int64_t> all_indices(const Dataset& ds) {
    std::vector<int64_t> idx(static_cast<size_t>(ds.size()));
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

Eigen::VectorXd unit_features(const Unit& u, bool with_context) {
    const size_t d = u.covariates.size();
    const size_t m = with_context ? u.context.size() : 0;
    Eigen::VectorXd x(d + m);
    for (size_t j = 0; j < d; ++j) x[static_cast<Eigen::Index>(j)] = u.covariates[j];
    for (size_t j = 0; j < m; ++j) x[static_cast<Eigen::Index>(d + j)] = u.context[j];
    return x;
}

double NuisanceSet::mu(int arm, const Unit& u) const {
    const RegressorPtr& m = arm == 1 ? mu1 : mu0;
    return m->predict(unit_features(u, mu_uses_context));
}

double NuisanceSet::sigma2(int arm, const Unit& u) const {
    const RegressorPtr& m = arm == 1 ? s21 : s20;
    return std::max(m->predict(unit_features(u, false)), sigma2_floor);
}

double NuisanceSet::e(int arm, const Unit& u) const {
    const double p1 = e1->prob(unit_features(u, false));
    return arm == 1 ? p1 : 1.0 - p1;
}

double NuisanceSet::q(int arm, const Unit& u) const {
    Eigen::VectorXd x = unit_features(u, false);
    double v1 = std::clamp(q1c->prob(x), q_floor, 1.0);
    double v0 = std::clamp(q0c->prob(x), q_floor, 1.0);
    const double sum = v0 + v1;
    if (sum > 1.0) { // disjoint events: P(Z=1,R=1) + P(Z=0,R=1) <= 1
        v1 /= sum;
        v0 /= sum;
    }
    return arm == 1 ? v1 : v0;
}

namespace {

struct ArmData {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
};

// Rows of the pool with Z=arm and R=1; features with or without context.
ArmData annotated_arm_data(const Dataset& ds, const std::vector<int64_t>& idx, int arm,
                           bool with_context) {
    std::vector<int64_t> rows;
    for (int64_t i : idx)
        if (ds[i].arm() == arm && ds[i].annotated) rows.push_back(i);
    if (rows.empty())
        throw DataError("arm " + std::to_string(arm) + " has no annotated units in the training pool");
    const Eigen::Index d = unit_features(ds[rows[0]], with_context).size();
    ArmData out;
    out.X.resize(static_cast<Eigen::Index>(rows.size()), d);
    out.y.resize(static_cast<Eigen::Index>(rows.size()));
    for (size_t r = 0; r < rows.size(); ++r) {
        out.X.row(static_cast<Eigen::Index>(r)) = unit_features(ds[rows[r]], with_context);
        out.y[static_cast<Eigen::Index>(r)] = *ds[rows[r]].outcome;
    }
    return out;
}

class ConvexEnsembleRegressor final : public Regressor {
public:
    ConvexEnsembleRegressor(RegressorPtr tabular, RegressorPtr contextual, double w_ctx, int x_dim,
                            int full_dim)
        : tabular_(std::move(tabular)), contextual_(std::move(contextual)), w_(w_ctx),
          x_dim_(x_dim), full_dim_(full_dim) {}

    double predict(Eigen::Ref<const Eigen::VectorXd> x) const override {
        const double tab = tabular_->predict(x.head(x_dim_));
        const double ctx = contextual_->predict(x);
        return w_ * ctx + (1.0 - w_) * tab;
    }
    int input_dim() const override { return full_dim_; }

private:
    RegressorPtr tabular_, contextual_;
    double w_;
    int x_dim_, full_dim_;
};

RegressorPtr fit_arm_outcome(const Dataset& ds, const std::vector<int64_t>& idx, int arm,
                             const RegressorSpec& spec, bool use_context, uint64_t seed) {
    if (!use_context || ds.context_dim() == 0) {
        ArmData d = annotated_arm_data(ds, idx, arm, false);
        return fit_regressor(spec, d.X, d.y, derive_seed(seed, "mu", static_cast<uint64_t>(arm)));
    }

    // Context path: hold out 20% for the ensemble weight grid.
    std::vector<int64_t> rows;
    for (int64_t i : idx)
        if (ds[i].arm() == arm && ds[i].annotated) rows.push_back(i);
    if (rows.empty())
        throw DataError("arm " + std::to_string(arm) + " has no annotated units in the training pool");

    Rng rng(derive_seed(seed, "mu-ensemble-split", static_cast<uint64_t>(arm)));
    std::vector<int64_t> shuffled = rows;
    rng.shuffle(shuffled);
    size_t holdout = shuffled.size() / 5;
    std::vector<int64_t> train(shuffled.begin() + static_cast<int64_t>(holdout), shuffled.end());
    std::vector<int64_t> valid(shuffled.begin(), shuffled.begin() + static_cast<int64_t>(holdout));
    if (train.empty()) train = rows;

    auto assemble = [&](const std::vector<int64_t>& which, bool ctx) {
        ArmData d;
        const Eigen::Index dim = unit_features(ds[which[0]], ctx).size();
        d.X.resize(static_cast<Eigen::Index>(which.size()), dim);
        d.y.resize(static_cast<Eigen::Index>(which.size()));
        for (size_t r = 0; r < which.size(); ++r) {
            d.X.row(static_cast<Eigen::Index>(r)) = unit_features(ds[which[r]], ctx);
            d.y[static_cast<Eigen::Index>(r)] = *ds[which[r]].outcome;
        }
        return d;
    };

    ArmData tab = assemble(train, false);
    ArmData ctx = assemble(train, true);
    const uint64_t arm_seed = derive_seed(seed, "mu", static_cast<uint64_t>(arm));
    RegressorPtr m_tab = fit_regressor(spec, tab.X, tab.y, derive_seed(arm_seed, "tab"));
    RegressorPtr m_ctx = fit_regressor(spec, ctx.X, ctx.y, derive_seed(arm_seed, "ctx"));

    double best_w = 0.0;
    if (!valid.empty()) {
        double best_mse = std::numeric_limits<double>::infinity();
        for (int g = 0; g <= 10; ++g) {
            const double w = g / 10.0;
            double mse = 0;
            for (int64_t i : valid) {
                const Eigen::VectorXd xf = unit_features(ds[i], true);
                const double pred = w * m_ctx->predict(xf) +
                                    (1 - w) * m_tab->predict(xf.head(ds.dim()));
                const double err = pred - *ds[i].outcome;
                mse += err * err;
            }
            if (mse < best_mse) {
                best_mse = mse;
                best_w = w;
            }
        }
    }
    const int full_dim = ds.dim() + ds.context_dim();
    return std::make_shared<ConvexEnsembleRegressor>(std::move(m_tab), std::move(m_ctx), best_w,
                                                     ds.dim(), full_dim);
}

} // namespace

ArmRegressors fit_outcome_models(const Dataset& ds, const std::vector<int64_t>& idx,
                                 const RegressorSpec& spec, bool use_context, uint64_t seed) {
    ArmRegressors out;
    out.uses_context = use_context && ds.context_dim() > 0;
    out.m0 = fit_arm_outcome(ds, idx, 0, spec, out.uses_context, seed);
    out.m1 = fit_arm_outcome(ds, idx, 1, spec, out.uses_context, seed);
    return out;
}

ArmRegressors fit_variance_models(const Dataset& ds, const std::vector<int64_t>& idx,
                                  const ArmRegressors& mu, const RegressorSpec& spec,
                                  uint64_t seed) {
    ArmRegressors out;
    out.uses_context = false;
    for (int arm = 0; arm <= 1; ++arm) {
        std::vector<int64_t> rows;
        for (int64_t i : idx)
            if (ds[i].arm() == arm && ds[i].annotated) rows.push_back(i);
        if (rows.empty())
            throw DataError("arm " + std::to_string(arm) + " has no annotated units in the training pool");
        Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), ds.dim());
        Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
        const RegressorPtr& m = arm == 1 ? mu.m1 : mu.m0;
        for (size_t r = 0; r < rows.size(); ++r) {
            const Unit& u = ds[rows[r]];
            X.row(static_cast<Eigen::Index>(r)) = unit_features(u, false);
            const double resid = *u.outcome - m->predict(unit_features(u, mu.uses_context));
            y[static_cast<Eigen::Index>(r)] = resid * resid;
        }
        RegressorPtr fitted =
            fit_regressor(spec, X, y, derive_seed(seed, "sigma2", static_cast<uint64_t>(arm)));
        (arm == 1 ? out.m1 : out.m0) = std::move(fitted);
    }
    return out;
}

ClassifierPtr fit_propensity(const Dataset& ds, const std::vector<int64_t>& idx,
                             const ClassifierSpec& spec, uint64_t seed) {
    if (idx.empty()) throw DataError("empty training pool for propensity");
    bool has0 = false, has1 = false;
    Eigen::MatrixXd X(static_cast<Eigen::Index>(idx.size()), ds.dim());
    Eigen::VectorXd y(static_cast<Eigen::Index>(idx.size()));
    for (size_t r = 0; r < idx.size(); ++r) {
        const Unit& u = ds[idx[r]];
        X.row(static_cast<Eigen::Index>(r)) = unit_features(u, false);
        y[static_cast<Eigen::Index>(r)] = u.arm();
        (u.arm() == 1 ? has1 : has0) = true;
    }
    if (!has0 || !has1)
        throw DataError("propensity fit requires both arms in the training pool");
    return fit_classifier(spec, X, y, derive_seed(seed, "propensity"));
}

RzScores fit_rz_score(const Dataset& ds, const std::vector<int64_t>& idx,
                      const ClassifierSpec& spec, uint64_t seed) {
    if (idx.empty()) throw DataError("empty training pool for rz score");
    Eigen::MatrixXd X(static_cast<Eigen::Index>(idx.size()), ds.dim());
    for (size_t r = 0; r < idx.size(); ++r)
        X.row(static_cast<Eigen::Index>(r)) = unit_features(ds[idx[r]], false);

    RzScores out;
    for (int arm = 0; arm <= 1; ++arm) {
        Eigen::VectorXd y(static_cast<Eigen::Index>(idx.size()));
        int64_t positives = 0;
        for (size_t r = 0; r < idx.size(); ++r) {
            const Unit& u = ds[idx[r]];
            const bool hit = u.arm() == arm && u.annotated;
            y[static_cast<Eigen::Index>(r)] = hit ? 1.0 : 0.0;
            positives += hit;
        }
        if (positives == 0)
            throw DataError("joint event {Z=" + std::to_string(arm) +
                            ", R=1} never occurs in the training pool");
        ClassifierPtr c =
            fit_classifier(spec, X, y, derive_seed(seed, "rz", static_cast<uint64_t>(arm)));
        (arm == 1 ? out.q1 : out.q0) = std::move(c);
    }
    return out;
}

NuisanceSet fit_nuisances(const Dataset& ds, const std::vector<int64_t>& idx,
                          const NuisanceSpecs& specs, uint64_t seed) {
    NuisanceSet set;
    ArmRegressors mu = fit_outcome_models(ds, idx, specs.mu, specs.use_context, seed);
    ArmRegressors var = fit_variance_models(ds, idx, mu, specs.var, seed);
    set.mu0 = mu.m0;
    set.mu1 = mu.m1;
    set.mu_uses_context = mu.uses_context;
    set.s20 = var.m0;
    set.s21 = var.m1;
    set.sigma2_floor = specs.sigma2_floor;
    set.e1 = fit_propensity(ds, idx, specs.e, seed);
    if (specs.fit_q) {
        RzScores q = fit_rz_score(ds, idx, specs.q, seed);
        set.q0c = q.q0;
        set.q1c = q.q1;
        set.q_floor = specs.q_floor;
    }
    uint64_t h = 0xCBF29CE484222325ULL;
    for (int64_t i : idx) h = fnv1a64(static_cast<uint64_t>(ds[i].id), h);
    set.fingerprint = h;
    return set;
}

} // namespace ab
