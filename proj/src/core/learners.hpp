#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace ab {

struct RegressorSpec {
    enum class Kind { ridge, knn, tree_ensemble };
    Kind kind = Kind::ridge;
    double ridge_lambda = 1e-6; // >= 0
    int knn_k = 10;             // >= 1
    int trees = 100;
    int max_depth = 8;
    int min_leaf = 4;

    void validate() const;
    static Kind parse_kind(const std::string& s);
};

struct ClassifierSpec {
    enum class Kind { logistic, tree_ensemble };
    Kind kind = Kind::logistic;
    double tol = 1e-8;   // IRLS convergence: max-norm of mean log-likelihood gradient
    int max_iter = 100;
    double clip_lo = 0.02;
    double clip_hi = 0.98;
    int trees = 100;
    int max_depth = 8;
    int min_leaf = 4;

    void validate() const;
    static Kind parse_kind(const std::string& s);
};

// Fitted functions are immutable and shareable.
class Regressor {
public:
    virtual ~Regressor() = default;
    virtual double predict(Eigen::Ref<const Eigen::VectorXd> x) const = 0;
    virtual int input_dim() const = 0;
};
using RegressorPtr = std::shared_ptr<const Regressor>;

class Classifier {
public:
    virtual ~Classifier() = default;
    // P(label = 1 | x), clipped into the spec's bounds.
    virtual double prob(Eigen::Ref<const Eigen::VectorXd> x) const = 0;
    virtual int input_dim() const = 0;
    virtual bool converged() const { return true; }
};
using ClassifierPtr = std::shared_ptr<const Classifier>;

// Deterministic given (data, spec, seed).
RegressorPtr fit_regressor(const RegressorSpec& spec, const Eigen::MatrixXd& X,
                           const Eigen::VectorXd& y, uint64_t seed);
ClassifierPtr fit_classifier(const ClassifierSpec& spec, const Eigen::MatrixXd& X,
                             const Eigen::VectorXd& y01, uint64_t seed);

// Wrappers used to inject known (oracle) nuisance functions in tests and
// simulation studies.
RegressorPtr make_function_regressor(std::function<double(Eigen::Ref<const Eigen::VectorXd>)> fn,
                                     int dim);
ClassifierPtr make_function_classifier(std::function<double(Eigen::Ref<const Eigen::VectorXd>)> fn,
                                       int dim, double clip_lo = 0.0, double clip_hi = 1.0);

// Logistic internals, exposed for the gradient/finite-difference checks.
// Log-likelihood is the per-sample average; design matrix gets an implicit
// leading intercept column.
double logistic_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& beta);
Eigen::VectorXd logistic_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& beta);

struct LogisticFit {
    Eigen::VectorXd beta; // [intercept, coefficients...]
    bool converged = false;
    double grad_norm = 0;
    int iterations = 0;
};
LogisticFit fit_logistic_irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tol,
                              int max_iter);

// Ridge with an unpenalized intercept; lambda=0 falls back to least squares.
struct RidgeFit {
    Eigen::VectorXd beta; // [intercept, coefficients...]
};
RidgeFit fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda);

} // namespace ab
