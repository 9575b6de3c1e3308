#include <doctest.h>

#include "core/errors.hpp"
#include "core/learners.hpp"
#include "core/rng.hpp"

#include "oracles.hpp"

#include <cmath>
#include <cstring>

using namespace ab;

namespace {

Eigen::MatrixXd random_matrix(int n, int d, uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd X(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) X(i, j) = rng.normal();
    return X;
}

} // namespace

TEST_CASE("ridge with lambda=0 interpolates an exactly linear target") {
    Eigen::MatrixXd X = random_matrix(50, 3, 1);
    Eigen::VectorXd y = 2.0 + (X * Eigen::Vector3d(1.0, -0.5, 3.0)).array();
    RegressorSpec spec;
    spec.ridge_lambda = 0.0;
    RegressorPtr m = fit_regressor(spec, X, y, 0);
    for (int i = 0; i < X.rows(); ++i)
        CHECK(m->predict(X.row(i)) == doctest::Approx(y[i]).epsilon(1e-10));
}

TEST_CASE("knn with k=n predicts the target mean") {
    Eigen::MatrixXd X = random_matrix(20, 2, 2);
    Eigen::VectorXd y = random_matrix(20, 1, 3);
    RegressorSpec spec;
    spec.kind = RegressorSpec::Kind::knn;
    spec.knn_k = 20;
    RegressorPtr m = fit_regressor(spec, X, y, 0);
    CHECK(m->predict(Eigen::Vector2d(0.3, -0.7)) == doctest::Approx(y.mean()).epsilon(1e-12));
}

TEST_CASE("ridge recovers the control-arm coefficients against an OLS oracle") {
    // y = 5 + x1 - 2 x2 + noise on n = 2000, d = 5.
    const int n = 2000, d = 5;
    Eigen::MatrixXd X = random_matrix(n, d, 4);
    Eigen::VectorXd y(n);
    Rng noise(99);
    for (int i = 0; i < n; ++i) y[i] = 5.0 + X(i, 0) - 2.0 * X(i, 1) + noise.normal(0.0, 1.8);

    RegressorSpec spec;
    spec.ridge_lambda = 1e-8;
    RidgeFit fit = fit_ridge(X, y, spec.ridge_lambda);

    const double truth[6] = {5.0, 1.0, -2.0, 0.0, 0.0, 0.0};
    for (int j = 0; j < 6; ++j) CHECK(std::abs(fit.beta[j] - truth[j]) < 0.1);

    // Plain-loop OLS oracle agrees with the (barely regularized) ridge path.
    std::vector<std::vector<double>> Xv(n, std::vector<double>(d));
    std::vector<double> yv(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) Xv[static_cast<size_t>(i)][static_cast<size_t>(j)] = X(i, j);
        yv[static_cast<size_t>(i)] = y[i];
    }
    std::vector<double> beta = oracle::ols(Xv, yv);
    for (int j = 0; j < 6; ++j)
        CHECK(fit.beta[j] == doctest::Approx(beta[static_cast<size_t>(j)]).epsilon(1e-6));
}

TEST_CASE("empty training set and singular system are reported") {
    Eigen::MatrixXd X(0, 2);
    Eigen::VectorXd y(0);
    CHECK_THROWS_AS(fit_regressor({}, X, y, 0), DataError);

    // Duplicate column makes X'X singular; lambda > 0 resolves it.
    Eigen::MatrixXd Xs(4, 2);
    Xs << 1, 1, 2, 2, 3, 3, 4, 4;
    Eigen::VectorXd ys(4);
    ys << 1, 2, 3, 4;
    RegressorSpec ok;
    ok.ridge_lambda = 1e-4;
    CHECK_NOTHROW(fit_regressor(ok, Xs, ys, 0));
}

TEST_CASE("tree ensemble fits a step function and stays deterministic") {
    const int n = 400;
    Eigen::MatrixXd X = random_matrix(n, 2, 6);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y[i] = X(i, 0) > 0 ? 3.0 : -1.0;
    RegressorSpec spec;
    spec.kind = RegressorSpec::Kind::tree_ensemble;
    spec.trees = 30;
    spec.max_depth = 4;
    spec.min_leaf = 5;
    RegressorPtr a = fit_regressor(spec, X, y, 42);
    RegressorPtr b = fit_regressor(spec, X, y, 42);
    double mse = 0;
    for (int i = 0; i < n; ++i) {
        const double pa = a->predict(X.row(i));
        CHECK(pa == b->predict(X.row(i))); // bitwise determinism
        mse += (pa - y[i]) * (pa - y[i]);
    }
    CHECK(mse / n < 0.5);
}

TEST_CASE("logistic: balanced labels independent of x give probability 0.5") {
    const int n = 600;
    Eigen::MatrixXd X = random_matrix(n, 2, 7);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y[i] = i % 2;
    ClassifierSpec spec;
    ClassifierPtr c = fit_classifier(spec, X, y, 0);
    CHECK(c->converged());
    double lo = 1, hi = 0;
    for (int i = 0; i < n; ++i) {
        const double p = c->prob(X.row(i));
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    CHECK(lo > 0.40);
    CHECK(hi < 0.60);
}

TEST_CASE("logistic on separable data clips and flags non-convergence") {
    const int n = 100;
    Eigen::MatrixXd X(n, 1);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = i < n / 2 ? -1.0 - i * 0.01 : 1.0 + i * 0.01;
        y[i] = i < n / 2 ? 0.0 : 1.0;
    }
    ClassifierSpec spec;
    ClassifierPtr c = fit_classifier(spec, X, y, 0);
    CHECK_FALSE(c->converged());
    CHECK(c->prob(Eigen::Matrix<double, 1, 1>(5.0)) == doctest::Approx(spec.clip_hi));
    CHECK(c->prob(Eigen::Matrix<double, 1, 1>(-5.0)) == doctest::Approx(spec.clip_lo));
}

TEST_CASE("logistic MLE recovers DGP coefficients at n=5000") {
    // Z ~ Bernoulli(1 / (1 + exp(x2 + x3 + 0.5))): coefficients (-0.5, -1, -1)
    // in the (intercept, x2, x3) parameterization.
    const int n = 5000;
    Eigen::MatrixXd X = random_matrix(n, 2, 8);
    Eigen::VectorXd y(n);
    Rng rng(1234);
    for (int i = 0; i < n; ++i) {
        const double p = 1.0 / (1.0 + std::exp(X(i, 0) + X(i, 1) + 0.5));
        y[i] = rng.bernoulli(p) ? 1.0 : 0.0;
    }
    LogisticFit fit = fit_logistic_irls(X, y, 1e-8, 100);
    CHECK(fit.converged);
    CHECK(std::abs(fit.beta[0] - -0.5) < 0.2);
    CHECK(std::abs(fit.beta[1] - -1.0) < 0.2);
    CHECK(std::abs(fit.beta[2] - -1.0) < 0.2);
}

TEST_CASE("logistic gradient: converged iterate has small gradient, matches finite differences") {
    const int n = 300;
    Eigen::MatrixXd X = random_matrix(n, 3, 9);
    Eigen::VectorXd y(n);
    Rng rng(77);
    for (int i = 0; i < n; ++i)
        y[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-(0.3 + X(i, 0) - X(i, 1))))) ? 1.0 : 0.0;

    LogisticFit fit = fit_logistic_irls(X, y, 1e-8, 100);
    REQUIRE(fit.converged);
    CHECK(logistic_gradient(X, y, fit.beta).lpNorm<Eigen::Infinity>() <= 1e-8);

    // Central finite differences on a fixed 10-point probe of beta space.
    Rng probe(5150);
    for (int point = 0; point < 10; ++point) {
        Eigen::VectorXd beta(4);
        for (int j = 0; j < 4; ++j) beta[j] = probe.uniform(-1.0, 1.0);
        const Eigen::VectorXd g = logistic_gradient(X, y, beta);
        for (int j = 0; j < 4; ++j) {
            const double h = 1e-6;
            Eigen::VectorXd up = beta, dn = beta;
            up[j] += h;
            dn[j] -= h;
            const double fd = (logistic_loglik(X, y, up) - logistic_loglik(X, y, dn)) / (2 * h);
            CHECK(g[j] == doctest::Approx(fd).epsilon(1e-5));
        }
    }
}

TEST_CASE("fitted predictions are finite for any finite input") {
    Eigen::MatrixXd X = random_matrix(60, 2, 10);
    Eigen::VectorXd y = random_matrix(60, 1, 11);
    Eigen::VectorXd y01(60);
    for (int i = 0; i < 60; ++i) y01[i] = i % 3 == 0 ? 1.0 : 0.0;

    std::vector<RegressorPtr> regs;
    for (auto kind :
         {RegressorSpec::Kind::ridge, RegressorSpec::Kind::knn, RegressorSpec::Kind::tree_ensemble}) {
        RegressorSpec spec;
        spec.kind = kind;
        spec.trees = 10;
        regs.push_back(fit_regressor(spec, X, y, 3));
    }
    std::vector<ClassifierPtr> clfs;
    for (auto kind : {ClassifierSpec::Kind::logistic, ClassifierSpec::Kind::tree_ensemble}) {
        ClassifierSpec spec;
        spec.kind = kind;
        spec.trees = 10;
        clfs.push_back(fit_classifier(spec, X, y01, 3));
    }
    Rng rng(404);
    for (int trial = 0; trial < 200; ++trial) {
        Eigen::Vector2d x(rng.uniform(-1e6, 1e6), rng.uniform(-1e6, 1e6));
        for (const auto& m : regs) CHECK(std::isfinite(m->predict(x)));
        for (const auto& c : clfs) {
            const double p = c->prob(x);
            CHECK(std::isfinite(p));
            CHECK(p > 0);
            CHECK(p < 1);
        }
    }
}

TEST_CASE("determinism: identical (data, spec, seed) gives bitwise-identical predictions") {
    Eigen::MatrixXd X = random_matrix(100, 3, 12);
    Eigen::VectorXd y = random_matrix(100, 1, 13);
    for (auto kind :
         {RegressorSpec::Kind::ridge, RegressorSpec::Kind::knn, RegressorSpec::Kind::tree_ensemble}) {
        RegressorSpec spec;
        spec.kind = kind;
        spec.trees = 20;
        RegressorPtr a = fit_regressor(spec, X, y, 555);
        RegressorPtr b = fit_regressor(spec, X, y, 555);
        for (int i = 0; i < 20; ++i) {
            const double pa = a->predict(X.row(i)), pb = b->predict(X.row(i));
            CHECK(std::memcmp(&pa, &pb, sizeof(double)) == 0);
        }
    }
}
