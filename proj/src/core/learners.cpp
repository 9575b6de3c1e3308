#include "learners.hpp"

#include "errors.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ab {

void RegressorSpec::validate() const {
    if (ridge_lambda < 0) throw ConfigError("ridge lambda must be >= 0");
    if (knn_k < 1) throw ConfigError("knn k must be >= 1");
    if (trees < 1 || max_depth < 1 || min_leaf < 1)
        throw ConfigError("tree ensemble requires trees, depth, min_leaf >= 1");
}

RegressorSpec::Kind RegressorSpec::parse_kind(const std::string& s) {
    if (s == "ridge") return Kind::ridge;
    if (s == "knn") return Kind::knn;
    if (s == "tree") return Kind::tree_ensemble;
    throw ConfigError("unknown regressor kind '" + s + "' (ridge|knn|tree)");
}

void ClassifierSpec::validate() const {
    if (!(tol > 0)) throw ConfigError("classifier tolerance must be positive");
    if (max_iter < 1) throw ConfigError("classifier max_iter must be >= 1");
    if (!(clip_lo > 0 && clip_hi < 1 && clip_lo < clip_hi))
        throw ConfigError("classifier clip bounds must satisfy 0 < lo < hi < 1");
    if (trees < 1 || max_depth < 1 || min_leaf < 1)
        throw ConfigError("tree ensemble requires trees, depth, min_leaf >= 1");
}

ClassifierSpec::Kind ClassifierSpec::parse_kind(const std::string& s) {
    if (s == "logistic") return Kind::logistic;
    if (s == "tree") return Kind::tree_ensemble;
    throw ConfigError("unknown classifier kind '" + s + "' (logistic|tree)");
}

static void check_training_data(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    if (X.rows() == 0) throw DataError("empty training set");
    if (X.rows() != y.size()) throw DataError("feature/target row count mismatch");
    if (!X.allFinite() || !y.allFinite()) throw DataError("non-finite values in training data");
}

// ---------------------------------------------------------------------------
// Ridge
// ---------------------------------------------------------------------------

RidgeFit fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda) {
    check_training_data(X, y);
    const Eigen::Index n = X.rows(), d = X.cols();
    Eigen::MatrixXd Xt(n, d + 1);
    Xt.col(0).setOnes();
    Xt.rightCols(d) = X;
    Eigen::MatrixXd A = Xt.transpose() * Xt;
    for (Eigen::Index j = 1; j <= d; ++j) A(j, j) += lambda; // intercept unpenalized
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    RidgeFit fit;
    fit.beta = ldlt.solve(Xt.transpose() * y);
    if (ldlt.info() != Eigen::Success || !fit.beta.allFinite())
        throw DataError("singular ridge system; increase lambda");
    return fit;
}

namespace {

class RidgeRegressor final : public Regressor {
public:
    RidgeRegressor(Eigen::VectorXd beta, int dim) : beta_(std::move(beta)), dim_(dim) {}
    double predict(Eigen::Ref<const Eigen::VectorXd> x) const override {
        return beta_[0] + beta_.tail(dim_).dot(x);
    }
    int input_dim() const override { return dim_; }

private:
    Eigen::VectorXd beta_;
    int dim_;
};

// ---------------------------------------------------------------------------
// k-nearest neighbours
// ---------------------------------------------------------------------------

class KnnRegressor final : public Regressor {
public:
    KnnRegressor(Eigen::MatrixXd X, Eigen::VectorXd y, int k)
        : X_(std::move(X)), y_(std::move(y)), k_(std::min<Eigen::Index>(k, X_.rows())) {}

    double predict(Eigen::Ref<const Eigen::VectorXd> x) const override {
        const Eigen::Index n = X_.rows();
        std::vector<std::pair<double, Eigen::Index>> d2(static_cast<size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i)
            d2[static_cast<size_t>(i)] = {(X_.row(i).transpose() - x).squaredNorm(), i};
        // Ties broken by training index for determinism.
        std::partial_sort(d2.begin(), d2.begin() + k_, d2.end());
        double sum = 0;
        for (Eigen::Index j = 0; j < k_; ++j) sum += y_[d2[static_cast<size_t>(j)].second];
        return sum / static_cast<double>(k_);
    }
    int input_dim() const override { return static_cast<int>(X_.cols()); }

private:
    Eigen::MatrixXd X_;
    Eigen::VectorXd y_;
    Eigen::Index k_;
};

// ---------------------------------------------------------------------------
// Bagged regression trees (CART, variance criterion)
// ---------------------------------------------------------------------------

struct TreeNode {
    int feature = -1; // -1: leaf
    double threshold = 0;
    double value = 0;
    int left = -1, right = -1;
};

class Tree {
public:
    void fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::vector<int>& rows,
             int max_depth, int min_leaf, int mtry, Rng& rng) {
        nodes_.clear();
        build(X, y, rows, 0, static_cast<int>(rows.size()), 0, max_depth, min_leaf, mtry, rng);
    }

    double predict(Eigen::Ref<const Eigen::VectorXd> x) const {
        int node = 0;
        while (nodes_[static_cast<size_t>(node)].feature >= 0) {
            const TreeNode& nd = nodes_[static_cast<size_t>(node)];
            node = x[nd.feature] <= nd.threshold ? nd.left : nd.right;
        }
        return nodes_[static_cast<size_t>(node)].value;
    }

private:
    // Builds over rows[lo, hi); returns node index.
    int build(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::vector<int>& rows, int lo,
              int hi, int depth, int max_depth, int min_leaf, int mtry, Rng& rng) {
        const int idx = static_cast<int>(nodes_.size());
        nodes_.emplace_back();
        const int n = hi - lo;
        double sum = 0, sum2 = 0;
        for (int i = lo; i < hi; ++i) {
            sum += y[rows[static_cast<size_t>(i)]];
            sum2 += y[rows[static_cast<size_t>(i)]] * y[rows[static_cast<size_t>(i)]];
        }
        const double mean = sum / n;
        nodes_[static_cast<size_t>(idx)].value = mean;
        const double sse = sum2 - sum * sum / n;
        if (depth >= max_depth || n < 2 * min_leaf || sse <= 1e-12) return idx;

        // Random feature subset, fixed size, sampled without replacement.
        const int d = static_cast<int>(X.cols());
        std::vector<int> features(static_cast<size_t>(d));
        std::iota(features.begin(), features.end(), 0);
        rng.shuffle(features);
        features.resize(static_cast<size_t>(std::min(mtry, d)));
        std::sort(features.begin(), features.end());

        int best_feature = -1, best_pos = -1;
        double best_gain = 1e-10, best_threshold = 0;
        std::vector<int> order(rows.begin() + lo, rows.begin() + hi);
        std::vector<int> best_order;
        for (int f : features) {
            std::sort(order.begin(), order.end(), [&](int a, int b) {
                if (X(a, f) != X(b, f)) return X(a, f) < X(b, f);
                return a < b;
            });
            double left_sum = 0;
            for (int i = 0; i < n - 1; ++i) {
                left_sum += y[order[static_cast<size_t>(i)]];
                const int nl = i + 1, nr = n - nl;
                if (nl < min_leaf || nr < min_leaf) continue;
                const double xa = X(order[static_cast<size_t>(i)], f);
                const double xb = X(order[static_cast<size_t>(i + 1)], f);
                if (xa == xb) continue;
                const double right_sum = sum - left_sum;
                const double gain = left_sum * left_sum / nl + right_sum * right_sum / nr - sum * sum / n;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feature = f;
                    best_pos = nl;
                    best_threshold = 0.5 * (xa + xb);
                    best_order = order;
                }
            }
        }
        if (best_feature < 0) return idx;

        std::copy(best_order.begin(), best_order.end(), rows.begin() + lo);
        nodes_[static_cast<size_t>(idx)].feature = best_feature;
        nodes_[static_cast<size_t>(idx)].threshold = best_threshold;
        const int left =
            build(X, y, rows, lo, lo + best_pos, depth + 1, max_depth, min_leaf, mtry, rng);
        const int right =
            build(X, y, rows, lo + best_pos, hi, depth + 1, max_depth, min_leaf, mtry, rng);
        nodes_[static_cast<size_t>(idx)].left = left;
        nodes_[static_cast<size_t>(idx)].right = right;
        return idx;
    }

    std::vector<TreeNode> nodes_;
};

class TreeEnsembleRegressor final : public Regressor {
public:
    TreeEnsembleRegressor(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int trees,
                          int max_depth, int min_leaf, uint64_t seed)
        : dim_(static_cast<int>(X.cols())) {
        const int n = static_cast<int>(X.rows());
        const int mtry = std::max(1, (dim_ + 2) / 3);
        trees_.resize(static_cast<size_t>(trees));
        Rng rng(derive_seed(seed, "tree-ensemble"));
        std::vector<int> rows(static_cast<size_t>(n));
        for (auto& tree : trees_) {
            for (auto& r : rows) r = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
            std::sort(rows.begin(), rows.end());
            tree.fit(X, y, rows, max_depth, min_leaf, mtry, rng);
        }
    }

    double predict(Eigen::Ref<const Eigen::VectorXd> x) const override {
        double sum = 0;
        for (const auto& tree : trees_) sum += tree.predict(x);
        return sum / static_cast<double>(trees_.size());
    }
    int input_dim() const override { return dim_; }

private:
    std::vector<Tree> trees_;
    int dim_;
};

// ---------------------------------------------------------------------------
// Classifiers
// ---------------------------------------------------------------------------

class LogisticClassifier final : public Classifier {
public:
    LogisticClassifier(LogisticFit fit, int dim, double lo, double hi)
        : fit_(std::move(fit)), dim_(dim), lo_(lo), hi_(hi) {}
    double prob(Eigen::Ref<const Eigen::VectorXd> x) const override {
        const double eta = fit_.beta[0] + fit_.beta.tail(dim_).dot(x);
        const double p = 1.0 / (1.0 + std::exp(-eta));
        return std::clamp(p, lo_, hi_);
    }
    int input_dim() const override { return dim_; }
    bool converged() const override { return fit_.converged; }

private:
    LogisticFit fit_;
    int dim_;
    double lo_, hi_;
};

class TreeClassifier final : public Classifier {
public:
    TreeClassifier(RegressorPtr inner, double lo, double hi)
        : inner_(std::move(inner)), lo_(lo), hi_(hi) {}
    double prob(Eigen::Ref<const Eigen::VectorXd> x) const override {
        return std::clamp(inner_->predict(x), lo_, hi_);
    }
    int input_dim() const override { return inner_->input_dim(); }

private:
    RegressorPtr inner_;
    double lo_, hi_;
};

class FunctionRegressor final : public Regressor {
public:
    FunctionRegressor(std::function<double(Eigen::Ref<const Eigen::VectorXd>)> fn, int dim)
        : fn_(std::move(fn)), dim_(dim) {}
    double predict(Eigen::Ref<const Eigen::VectorXd> x) const override { return fn_(x); }
    int input_dim() const override { return dim_; }

private:
    std::function<double(Eigen::Ref<const Eigen::VectorXd>)> fn_;
    int dim_;
};

class FunctionClassifier final : public Classifier {
public:
    FunctionClassifier(std::function<double(Eigen::Ref<const Eigen::VectorXd>)> fn, int dim,
                       double lo, double hi)
        : fn_(std::move(fn)), dim_(dim), lo_(lo), hi_(hi) {}
    double prob(Eigen::Ref<const Eigen::VectorXd> x) const override {
        double p = fn_(x);
        if (lo_ > 0 || hi_ < 1) p = std::clamp(p, lo_, hi_);
        return p;
    }
    int input_dim() const override { return dim_; }

private:
    std::function<double(Eigen::Ref<const Eigen::VectorXd>)> fn_;
    int dim_;
    double lo_, hi_;
};

} // namespace

// ---------------------------------------------------------------------------
// Logistic likelihood machinery
// ---------------------------------------------------------------------------

static double sigmoid(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

double logistic_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& beta) {
    const Eigen::Index n = X.rows(), d = X.cols();
    double ll = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double eta = beta[0] + beta.tail(d).dot(X.row(i));
        // log sigma(eta) = -log(1 + exp(-eta)), stable in both tails
        ll += y[i] * eta - (eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)));
    }
    return ll / static_cast<double>(n);
}

Eigen::VectorXd logistic_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& beta) {
    const Eigen::Index n = X.rows(), d = X.cols();
    Eigen::VectorXd g = Eigen::VectorXd::Zero(d + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double resid = y[i] - sigmoid(beta[0] + beta.tail(d).dot(X.row(i)));
        g[0] += resid;
        g.tail(d) += resid * X.row(i).transpose();
    }
    return g / static_cast<double>(n);
}

LogisticFit fit_logistic_irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tol,
                              int max_iter) {
    check_training_data(X, y);
    const Eigen::Index n = X.rows(), d = X.cols();
    Eigen::MatrixXd Xt(n, d + 1);
    Xt.col(0).setOnes();
    Xt.rightCols(d) = X;

    LogisticFit fit;
    fit.beta = Eigen::VectorXd::Zero(d + 1);
    Eigen::VectorXd best_beta = fit.beta;
    double best_norm = std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < max_iter; ++iter) {
        Eigen::VectorXd eta = Xt * fit.beta;
        Eigen::VectorXd p(n), w(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            p[i] = sigmoid(eta[i]);
            w[i] = std::max(p[i] * (1 - p[i]), 1e-12);
        }
        Eigen::VectorXd grad = Xt.transpose() * (y - p) / static_cast<double>(n);
        const double gnorm = grad.lpNorm<Eigen::Infinity>();
        if (gnorm < best_norm) {
            best_norm = gnorm;
            best_beta = fit.beta;
        }
        fit.iterations = iter;
        if (gnorm <= tol) {
            // A saturated, perfectly-classifying iterate means the likelihood
            // has no finite maximizer (separation); report non-convergence.
            bool separated = eta.lpNorm<Eigen::Infinity>() > 10.0;
            for (Eigen::Index i = 0; separated && i < n; ++i)
                if ((eta[i] > 0) != (y[i] > 0.5)) separated = false;
            fit.converged = !separated;
            fit.grad_norm = gnorm;
            return fit;
        }
        Eigen::MatrixXd H = Xt.transpose() * w.asDiagonal() * Xt / static_cast<double>(n);
        H.diagonal().array() += 1e-12;
        Eigen::VectorXd step = H.ldlt().solve(grad);
        if (!step.allFinite()) break;
        fit.beta += step;
    }
    // Non-convergence (e.g. separable data): report best iterate.
    fit.beta = best_beta;
    fit.grad_norm = best_norm;
    fit.converged = false;
    return fit;
}

// ---------------------------------------------------------------------------
// Factories
// ---------------------------------------------------------------------------

RegressorPtr fit_regressor(const RegressorSpec& spec, const Eigen::MatrixXd& X,
                           const Eigen::VectorXd& y, uint64_t seed) {
    spec.validate();
    check_training_data(X, y);
    switch (spec.kind) {
        case RegressorSpec::Kind::ridge: {
            RidgeFit fit = fit_ridge(X, y, spec.ridge_lambda);
            return std::make_shared<RidgeRegressor>(std::move(fit.beta), static_cast<int>(X.cols()));
        }
        case RegressorSpec::Kind::knn:
            return std::make_shared<KnnRegressor>(X, y, spec.knn_k);
        case RegressorSpec::Kind::tree_ensemble:
            return std::make_shared<TreeEnsembleRegressor>(X, y, spec.trees, spec.max_depth,
                                                           spec.min_leaf, seed);
    }
    throw ConfigError("unreachable regressor kind");
}

ClassifierPtr fit_classifier(const ClassifierSpec& spec, const Eigen::MatrixXd& X,
                             const Eigen::VectorXd& y01, uint64_t seed) {
    spec.validate();
    check_training_data(X, y01);
    for (Eigen::Index i = 0; i < y01.size(); ++i)
        if (y01[i] != 0.0 && y01[i] != 1.0) throw DataError("classifier labels must be 0/1");
    switch (spec.kind) {
        case ClassifierSpec::Kind::logistic: {
            LogisticFit fit = fit_logistic_irls(X, y01, spec.tol, spec.max_iter);
            return std::make_shared<LogisticClassifier>(std::move(fit), static_cast<int>(X.cols()),
                                                        spec.clip_lo, spec.clip_hi);
        }
        case ClassifierSpec::Kind::tree_ensemble: {
            RegressorSpec rs;
            rs.kind = RegressorSpec::Kind::tree_ensemble;
            rs.trees = spec.trees;
            rs.max_depth = spec.max_depth;
            rs.min_leaf = spec.min_leaf;
            return std::make_shared<TreeClassifier>(fit_regressor(rs, X, y01, seed), spec.clip_lo,
                                                    spec.clip_hi);
        }
    }
    throw ConfigError("unreachable classifier kind");
}

RegressorPtr make_function_regressor(std::function<double(Eigen::Ref<const Eigen::VectorXd>)> fn,
                                     int dim) {
    return std::make_shared<FunctionRegressor>(std::move(fn), dim);
}

ClassifierPtr make_function_classifier(std::function<double(Eigen::Ref<const Eigen::VectorXd>)> fn,
                                       int dim, double clip_lo, double clip_hi) {
    return std::make_shared<FunctionClassifier>(std::move(fn), dim, clip_lo, clip_hi);
}

} // namespace ab
