#include <doctest.h>

#include "core/design.hpp"
#include "core/errors.hpp"
#include "core/rng.hpp"
#include "core/sim.hpp"

#include "oracles.hpp"
#include "test_support.hpp"

#include <cmath>
#include <filesystem>

using namespace ab;
using testsupport::make_unit;
using testsupport::oracle_nuisances;
using testsupport::pi_term;

namespace {

// Discrete instance: m support points, n_p copies each, k_p of them in arm 1,
// with e1(p) = k_p / n_p so the own-arm and e-weighted empirical budget forms
// coincide (a property of the instance, not of the operations under test).
struct DiscreteInstance {
    Dataset ds;
    NuisanceSet nuis;
    std::vector<double> points;
    std::vector<double> s0, s1, e1;
    std::vector<int> copies, arm1;
};

DiscreteInstance make_discrete(Rng& rng, int max_points = 5) {
    DiscreteInstance inst;
    const int m = 2 + static_cast<int>(rng.below(static_cast<uint64_t>(max_points - 1)));
    std::vector<double> s0(m), s1(m), e1(m), points(m);
    std::vector<int> copies(m), arm1(m);
    std::vector<Unit> units;
    int64_t id = 0;
    for (int p = 0; p < m; ++p) {
        points[static_cast<size_t>(p)] = p;
        s0[static_cast<size_t>(p)] = rng.uniform(0.1, 5.0);
        s1[static_cast<size_t>(p)] = rng.uniform(0.1, 5.0);
        const int n_p = 4 + static_cast<int>(rng.below(6)); // 4..9 copies
        const int k_p = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(n_p - 1)));
        copies[static_cast<size_t>(p)] = n_p;
        arm1[static_cast<size_t>(p)] = k_p;
        e1[static_cast<size_t>(p)] = static_cast<double>(k_p) / n_p;
        for (int c = 0; c < n_p; ++c)
            units.push_back(make_unit(id++, {static_cast<double>(p)}, c < k_p ? 1.0 : 0.0));
    }
    inst.ds = Dataset(std::move(units), TreatmentMode::binary);
    auto lookup = [](std::vector<double> table) {
        return [table = std::move(table)](const std::vector<double>& x) {
            return table[static_cast<size_t>(std::llround(x[0]))];
        };
    };
    inst.nuis = oracle_nuisances(1, lookup(std::vector<double>(static_cast<size_t>(m), 0.0)),
                                 lookup(std::vector<double>(static_cast<size_t>(m), 0.0)),
                                 lookup(s0), lookup(s1), lookup(e1));
    inst.points = points;
    inst.s0 = s0;
    inst.s1 = s1;
    inst.e1 = e1;
    inst.copies = copies;
    inst.arm1 = arm1;
    return inst;
}

// Grouped e-weighted budget problem matching the instance (see oracles.hpp).
oracle::BudgetProblem grouped_problem(const DiscreteInstance& inst, double budget, double floor) {
    oracle::BudgetProblem prob;
    const double n = static_cast<double>(inst.ds.size());
    for (size_t p = 0; p < inst.points.size(); ++p) {
        const double n_p = inst.copies[p];
        for (int z = 0; z <= 1; ++z) {
            const double e = z == 1 ? inst.e1[p] : 1.0 - inst.e1[p];
            const double s2 = z == 1 ? inst.s1[p] : inst.s0[p];
            prob.a.push_back(n_p * s2 / (e * n));
            prob.w.push_back(n_p * e / n);
        }
    }
    prob.target = budget;
    prob.lo = floor;
    prob.hi = 1.0;
    return prob;
}

double grouped_objective_of_design(const DiscreteInstance& inst, const DesignProbabilities& d) {
    return pi_term(inst.ds, inst.nuis, d.pi0, d.pi1);
}

} // namespace

TEST_CASE("asymptotic_variance: flat instance gives 4, halving pi doubles the pi-term") {
    std::vector<Unit> units;
    for (int i = 0; i < 40; ++i) units.push_back(make_unit(i, {static_cast<double>(i % 7)}, i % 2));
    Dataset ds(std::move(units), TreatmentMode::binary);
    NuisanceSet nuis = oracle_nuisances(
        1, [](const std::vector<double>&) { return 2.0; },
        [](const std::vector<double>&) { return 5.0; }, // mu1 - mu0 constant => Var term 0
        [](const std::vector<double>&) { return 1.0; },
        [](const std::vector<double>&) { return 1.0; },
        [](const std::vector<double>&) { return 0.5; });
    CHECK(asymptotic_variance(ds, nuis, [](int, const Unit&) { return 1.0; }) ==
          doctest::Approx(4.0).epsilon(1e-12));
    CHECK(asymptotic_variance(ds, nuis, [](int, const Unit&) { return 0.5; }) ==
          doctest::Approx(8.0).epsilon(1e-12));
    CHECK_THROWS_AS(asymptotic_variance(ds, nuis, [](int, const Unit&) { return 0.0; }), DataError);
}

TEST_CASE("asymptotic_variance: matches enumeration oracle on a 3-point instance") {
    Rng rng(2024);
    DiscreteInstance inst = make_discrete(rng, 3);
    auto pi_fn = [](int z, const Unit& u) { return 0.2 + 0.1 * z + 0.05 * u.covariates[0]; };
    const double got = asymptotic_variance(inst.ds, inst.nuis, pi_fn);

    // Enumeration over support points with count weights; mu terms are zero.
    double expect = 0;
    const double n = static_cast<double>(inst.ds.size());
    for (size_t p = 0; p < inst.points.size(); ++p) {
        const double x = inst.points[p];
        const double w = inst.copies[p] / n;
        Unit probe = make_unit(0, {x}, 0);
        expect += w * (inst.s1[p] / (inst.e1[p] * pi_fn(1, probe)) +
                       inst.s0[p] / ((1 - inst.e1[p]) * pi_fn(0, probe)));
    }
    CHECK(got == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("asymptotic_variance is monotone: raising one pi never increases it") {
    Rng rng(99);
    DiscreteInstance inst = make_discrete(rng);
    std::vector<double> base(static_cast<size_t>(inst.ds.size()) * 2);
    for (auto& b : base) b = rng.uniform(0.05, 0.9);
    auto pi_of = [&](const std::vector<double>& table) {
        return [&table, &inst](int z, const Unit& u) {
            // Index by unit order within dataset.
            for (int64_t i = 0; i < inst.ds.size(); ++i)
                if (inst.ds[i].id == u.id)
                    return table[static_cast<size_t>(2 * i + z)];
            return 0.5;
        };
    };
    const double before = asymptotic_variance(inst.ds, inst.nuis, pi_of(base));
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> bumped = base;
        const size_t j = static_cast<size_t>(rng.below(bumped.size()));
        bumped[j] = std::min(1.0, bumped[j] + rng.uniform(0.0, 1.0 - bumped[j]));
        CHECK(asymptotic_variance(inst.ds, inst.nuis, pi_of(bumped)) <= before + 1e-12);
    }
}

TEST_CASE("optimal_pi_global: symmetric instance forces uniform B; B=1 forces 1") {
    std::vector<Unit> units;
    for (int i = 0; i < 30; ++i) units.push_back(make_unit(i, {static_cast<double>(i)}, i % 2));
    Dataset ds(std::move(units), TreatmentMode::binary);
    NuisanceSet nuis = oracle_nuisances(
        1, [](const std::vector<double>&) { return 0.0; },
        [](const std::vector<double>&) { return 0.0; },
        [](const std::vector<double>&) { return 2.5; },
        [](const std::vector<double>&) { return 2.5; },
        [](const std::vector<double>&) { return 0.5; });
    for (double budget : {0.1, 0.37, 0.8}) {
        DesignProbabilities d = optimal_pi_global(ds, nuis, budget, 1e-6);
        for (double p : d.pi_own) CHECK(p == doctest::Approx(budget).epsilon(1e-12));
        CHECK(d.audit.expected_fraction == doctest::Approx(budget).epsilon(1e-12));
    }
    DesignProbabilities d1 = optimal_pi_global(ds, nuis, 1.0);
    for (double p : d1.pi_own) CHECK(p == 1.0);
}

TEST_CASE("optimal_pi_global: degenerate normalizer falls back to uniform") {
    std::vector<Unit> units;
    for (int i = 0; i < 10; ++i) units.push_back(make_unit(i, {0.0}, i % 2));
    Dataset ds(std::move(units), TreatmentMode::binary);
    NuisanceSet nuis = oracle_nuisances(
        1, [](const std::vector<double>&) { return 0.0; },
        [](const std::vector<double>&) { return 0.0; },
        [](const std::vector<double>&) { return 0.0; }, // zero variance everywhere
        [](const std::vector<double>&) { return 0.0; },
        [](const std::vector<double>&) { return 0.5; }, 1e-40);
    DesignProbabilities d = optimal_pi_global(ds, nuis, 0.3);
    CHECK(d.audit.fallback_uniform);
    for (double p : d.pi_own) CHECK(p == doctest::Approx(0.3));
}

TEST_CASE("optimal_pi_global: matches the projected-gradient oracle on a 3-point instance") {
    Rng rng(31337);
    DiscreteInstance inst = make_discrete(rng, 3);
    const double budget = 0.3, floor = 1e-6;
    DesignProbabilities mine = optimal_pi_global(inst.ds, inst.nuis, budget, floor);
    CHECK(mine.audit.feasible);

    oracle::BudgetProblem prob = grouped_problem(inst, budget, floor);
    std::vector<double> x = oracle::solve_budget_pgd(prob);
    const double oracle_value = oracle::budget_objective(prob, x);
    const double mine_value = grouped_objective_of_design(inst, mine);
    CHECK(mine_value == doctest::Approx(oracle_value).epsilon(1e-6));
}

TEST_CASE("Thm-1 optimality: closed form beats oracle and uniform on 100 random instances") {
    Rng rng(777);
    for (int trial = 0; trial < 100; ++trial) {
        DiscreteInstance inst = make_discrete(rng);
        const double budget = rng.uniform(0.05, 0.9);
        const double floor = 1e-6;
        DesignProbabilities mine = optimal_pi_global(inst.ds, inst.nuis, budget, floor);
        const double mine_value = grouped_objective_of_design(inst, mine);

        oracle::BudgetProblem prob = grouped_problem(inst, budget, floor);
        std::vector<double> x = oracle::solve_budget_pgd(prob);
        const double oracle_value = oracle::budget_objective(prob, x);

        std::vector<double> uniform_pi(static_cast<size_t>(inst.ds.size()), budget);
        const double uniform_value = pi_term(inst.ds, inst.nuis, uniform_pi, uniform_pi);

        CHECK(mine_value <= oracle_value + 1e-6 * std::abs(oracle_value));
        CHECK(mine_value <= uniform_value + 1e-12);

        // Emitted plans always satisfy the empirical budget to 1e-9.
        double spent = 0;
        for (double p : mine.pi_own) {
            CHECK(p > 0);
            CHECK(p <= 1.0);
            spent += p;
        }
        CHECK(spent / static_cast<double>(inst.ds.size()) <= budget * (1 + 1e-9) + 1e-12);
    }
}

TEST_CASE("scale equivariance: scaling sigma2 leaves the closed form unchanged") {
    Rng rng(888);
    DiscreteInstance inst = make_discrete(rng);
    std::vector<double> s0c = inst.s0, s1c = inst.s1;
    const double c = 17.5;
    for (auto& v : s0c) v *= c;
    for (auto& v : s1c) v *= c;
    auto lookup = [](std::vector<double> table) {
        return [table = std::move(table)](const std::vector<double>& x) {
            return table[static_cast<size_t>(std::llround(x[0]))];
        };
    };
    NuisanceSet scaled = oracle_nuisances(
        1, [](const std::vector<double>&) { return 0.0; },
        [](const std::vector<double>&) { return 0.0; }, lookup(s0c), lookup(s1c),
        lookup(inst.e1));

    DesignProbabilities a = optimal_pi_global(inst.ds, inst.nuis, 0.4, 1e-6);
    DesignProbabilities b = optimal_pi_global(inst.ds, scaled, 0.4, 1e-6);
    for (size_t i = 0; i < a.pi_own.size(); ++i) {
        CHECK(a.pi0[i] == doctest::Approx(b.pi0[i]).epsilon(1e-12));
        CHECK(a.pi1[i] == doctest::Approx(b.pi1[i]).epsilon(1e-12));
    }

    // Argmin invariance through the oracle route as well.
    oracle::BudgetProblem p1 = grouped_problem(inst, 0.4, 1e-6);
    oracle::BudgetProblem p2 = p1;
    for (auto& av : p2.a) av *= c;
    std::vector<double> x1 = oracle::solve_budget_pgd(p1);
    std::vector<double> x2 = oracle::solve_budget_pgd(p2);
    for (size_t i = 0; i < x1.size(); ++i) CHECK(x1[i] == doctest::Approx(x2[i]).epsilon(1e-3));
}

TEST_CASE("optimal_pi_per_arm: constant shape gives B_z; budgets bind per arm") {
    std::vector<Unit> units;
    for (int i = 0; i < 40; ++i) units.push_back(make_unit(i, {static_cast<double>(i)}, i % 2));
    Dataset ds(std::move(units), TreatmentMode::binary);
    NuisanceSet nuis = oracle_nuisances(
        1, [](const std::vector<double>&) { return 0.0; },
        [](const std::vector<double>&) { return 0.0; },
        [](const std::vector<double>&) { return 1.0; },
        [](const std::vector<double>&) { return 3.0; },
        [](const std::vector<double>&) { return 0.5; });
    DesignProbabilities d = optimal_pi_per_arm(ds, nuis, 0.25, 0.6, 1e-6);
    double spend0 = 0, spend1 = 0;
    int64_t n0 = 0, n1 = 0;
    for (int64_t i = 0; i < ds.size(); ++i) {
        if (ds[i].arm() == 1) {
            CHECK(d.pi_own[static_cast<size_t>(i)] == doctest::Approx(0.6).epsilon(1e-12));
            spend1 += d.pi_own[static_cast<size_t>(i)];
            ++n1;
        } else {
            CHECK(d.pi_own[static_cast<size_t>(i)] == doctest::Approx(0.25).epsilon(1e-12));
            spend0 += d.pi_own[static_cast<size_t>(i)];
            ++n0;
        }
    }
    CHECK(spend0 / n0 == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(spend1 / n1 == doctest::Approx(0.6).epsilon(1e-9));
}

TEST_CASE("optimal_pi_per_arm: two-value covariate matches a golden-section oracle") {
    // Two support values a, b with distinct sigma2; e1 equals the empirical
    // arm ratio at each point so the closed form and the oracle face the
    // identical finite problem.
    std::vector<Unit> units;
    int64_t id = 0;
    for (int c = 0; c < 6; ++c) units.push_back(make_unit(id++, {0.0}, 1));
    for (int c = 0; c < 4; ++c) units.push_back(make_unit(id++, {1.0}, 1));
    for (int c = 0; c < 5; ++c) units.push_back(make_unit(id++, {0.0}, 0));
    for (int c = 0; c < 5; ++c) units.push_back(make_unit(id++, {1.0}, 0));
    Dataset ds(std::move(units), TreatmentMode::binary);
    auto s1 = [](const std::vector<double>& x) { return x[0] < 0.5 ? 4.0 : 0.5; };
    auto s0 = [](const std::vector<double>& x) { return x[0] < 0.5 ? 1.0 : 2.0; };
    auto e1 = [](const std::vector<double>& x) { return x[0] < 0.5 ? 6.0 / 11.0 : 4.0 / 9.0; };
    NuisanceSet nuis = oracle_nuisances(
        1, [](const std::vector<double>&) { return 0.0; },
        [](const std::vector<double>&) { return 0.0; }, s0, s1, e1);

    const double b1 = 0.35;
    DesignProbabilities mine = optimal_pi_per_arm(ds, nuis, 0.35, b1, 1e-9);

    // Oracle: within arm 1, budget 6 pi_a + 4 pi_b = 10 b1 over own-arm units;
    // objective includes every unit's arm-1 term (10 at x=a, 10 at x=b, sample
    // weights), with pi capped at 1. Golden-section over the free variable.
    auto objective = [&](double pi_a) {
        const double pi_b = std::clamp((10.0 * b1 - 6.0 * pi_a) / 4.0, 1e-9, 1.0);
        double total = 0;
        for (const Unit& u : ds.units()) {
            const double s = s1({u.covariates[0]});
            const double e = e1({u.covariates[0]});
            total += s / (e * (u.covariates[0] < 0.5 ? pi_a : pi_b));
        }
        return total / static_cast<double>(ds.size());
    };
    const double lo = std::max(1e-9, (10.0 * b1 - 4.0) / 6.0);
    const double hi = std::min(1.0, 10.0 * b1 / 6.0);
    const double best_a = oracle::golden_section(objective, lo, hi, 300);
    double mine_a = 0, mine_b = 0;
    for (int64_t i = 0; i < ds.size(); ++i)
        if (ds[i].arm() == 1) {
            (ds[i].covariates[0] < 0.5 ? mine_a : mine_b) = mine.pi_own[static_cast<size_t>(i)];
        }
    CHECK(mine_a == doctest::Approx(best_a).epsilon(1e-6));
    CHECK(objective(mine_a) == doctest::Approx(objective(best_a)).epsilon(1e-9));
    (void)mine_b;
}

TEST_CASE("higher sigma2/e concentrates annotation: per-arm plan means reflect it") {
    // Raw generator variance functions (3.5 + 0.3 cos vs 1.3 + 0.4 sin) with
    // the logistic propensity: the high-variance arm's own-arm mean is larger.
    DgpSpec spec;
    spec.n = 20000;
    spec.seed = 4;
    Dataset ds = generate(spec).data;
    NuisanceSet nuis = oracle_nuisances(
        DgpSpec::d, [](const std::vector<double>&) { return 0.0; },
        [](const std::vector<double>&) { return 0.0; },
        [](const std::vector<double>& x) { return 3.5 + 0.3 * std::cos(x[2]); },
        [](const std::vector<double>& x) { return 1.3 + 0.4 * std::sin(x[0]); },
        [](const std::vector<double>& x) { return 1.0 / (1.0 + std::exp(x[1] + x[2] + 0.5)); });
    for (double budget : {0.1, 0.2, 0.3}) {
        DesignProbabilities d = optimal_pi_global(ds, nuis, budget, 0.01);
        double mean0 = 0, mean1 = 0;
        int64_t n0 = 0, n1 = 0;
        for (int64_t i = 0; i < ds.size(); ++i) {
            if (ds[i].arm() == 0) {
                mean0 += d.pi_own[static_cast<size_t>(i)];
                ++n0;
            } else {
                mean1 += d.pi_own[static_cast<size_t>(i)];
                ++n1;
            }
        }
        CHECK(mean0 / n0 > mean1 / n1);
    }
}

TEST_CASE("batch2_probability: mixture identity, arithmetic case, clamping") {
    Batch2Probability same = batch2_probability(0.3, 0.55, 0.3);
    CHECK(same.pi2 == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(same.feasible);

    Batch2Probability arith = batch2_probability(0.5, 0.5, 0.2);
    CHECK(arith.pi2 == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(arith.feasible);

    Batch2Probability clamped = batch2_probability(0.05, 0.5, 0.2);
    CHECK(clamped.pi2 == 0.0);
    CHECK_FALSE(clamped.feasible);
}

TEST_CASE("relative_efficiency: symmetric case is exactly 1; known instance is 0.9") {
    std::vector<Unit> units;
    for (int i = 0; i < 64; ++i) units.push_back(make_unit(i, {static_cast<double>(i)}, i % 2));
    Dataset ds(std::move(units), TreatmentMode::binary);
    NuisanceSet equal = oracle_nuisances(
        1, [](const std::vector<double>&) { return 0.0; },
        [](const std::vector<double>&) { return 0.0; },
        [](const std::vector<double>&) { return 2.0; },
        [](const std::vector<double>&) { return 2.0; },
        [](const std::vector<double>&) { return 0.5; });
    CHECK(relative_efficiency(ds, equal, 0.0, 0.3) == doctest::Approx(1.0).epsilon(1e-12));

    NuisanceSet skew = oracle_nuisances(
        1, [](const std::vector<double>&) { return 0.0; },
        [](const std::vector<double>&) { return 0.0; },
        [](const std::vector<double>&) { return 1.0; },
        [](const std::vector<double>&) { return 4.0; },
        [](const std::vector<double>&) { return 0.5; });
    CHECK(relative_efficiency(ds, skew, 0.0, 0.2) == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("relative_efficiency: decreases as the budget shrinks (unequal variances)") {
    std::vector<Unit> units;
    for (int i = 0; i < 64; ++i) units.push_back(make_unit(i, {static_cast<double>(i)}, i % 2));
    Dataset ds(std::move(units), TreatmentMode::binary);
    NuisanceSet skew = oracle_nuisances(
        1, [](const std::vector<double>&) { return 0.0; },
        [](const std::vector<double>&) { return 0.0; },
        [](const std::vector<double>&) { return 1.0; },
        [](const std::vector<double>&) { return 4.0; },
        [](const std::vector<double>&) { return 0.5; });
    const double var_tau = 2.0;
    const double at_05 = relative_efficiency(ds, skew, var_tau, 0.5);
    const double at_02 = relative_efficiency(ds, skew, var_tau, 0.2);
    const double at_005 = relative_efficiency(ds, skew, var_tau, 0.05);
    CHECK(at_05 > at_02);
    CHECK(at_02 > at_005);
}

TEST_CASE("relative_efficiency <= 1 on 1000 random instances") {
    Rng rng(4242);
    for (int trial = 0; trial < 1000; ++trial) {
        DiscreteInstance inst = make_discrete(rng);
        const double var_tau = rng.uniform(0.0, 3.0);
        const double budget = rng.uniform(0.02, 1.0);
        CHECK(relative_efficiency(inst.ds, inst.nuis, var_tau, budget) <= 1.0 + 1e-9);
    }
}

TEST_CASE("kernel localization: constant propensity reduces to itself") {
    KernelSpec kernel;
    kernel.kind = KernelSpec::Kind::gaussian;
    kernel.h = 0.7;
    const double local = kernel_localized_propensity([](double) { return 0.42; }, kernel, 1.3);
    CHECK(local == doctest::Approx(0.42).epsilon(1e-7));
}

TEST_CASE("kernel localization: box kernel averages a linear propensity exactly") {
    KernelSpec kernel;
    kernel.kind = KernelSpec::Kind::box;
    kernel.h = 0.5;
    auto e_lin = [](double z) { return 0.2 + 0.3 * z; };
    const double z0 = 0.8;
    const double local = kernel_localized_propensity(e_lin, kernel, z0);
    CHECK(local == doctest::Approx(e_lin(z0)).epsilon(1e-10));
}

TEST_CASE("kernel localization: gaussian against a 1e5-point trapezoid oracle") {
    KernelSpec kernel;
    kernel.kind = KernelSpec::Kind::gaussian;
    kernel.h = 0.4;
    auto e_exp = [](double z) { return std::exp(z) / 10.0; };
    const double z0 = 0.1;
    const double mine = kernel_localized_propensity(e_exp, kernel, z0);
    const double ref = oracle::trapezoid(
        [&](double zp) { return kernel(zp - z0) * e_exp(zp); }, z0 - 6 * kernel.h,
        z0 + 6 * kernel.h, 100000);
    CHECK(mine == doctest::Approx(ref).epsilon(1e-6));
}

TEST_CASE("kernel spec integrates to one and is symmetric") {
    for (auto kind : {KernelSpec::Kind::gaussian, KernelSpec::Kind::box}) {
        KernelSpec kernel;
        kernel.kind = kind;
        kernel.h = 0.8;
        const double mass = oracle::trapezoid([&](double u) { return kernel(u); }, -8.0, 8.0, 200001);
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
        Rng rng(7);
        for (int i = 0; i < 20; ++i) {
            const double u = rng.uniform(0.0, 3.0);
            CHECK(kernel(u) == doctest::Approx(kernel(-u)).epsilon(1e-15));
        }
    }
}

TEST_CASE("optimal_pi_continuous: constant-in-z propensity reduces to the binary shape") {
    std::vector<Unit> units;
    Rng rng(11);
    for (int i = 0; i < 50; ++i) units.push_back(make_unit(i, {rng.normal()}, rng.uniform(-1, 1)));
    Dataset ds(std::move(units), TreatmentMode::continuous);
    KernelSpec kernel;
    kernel.kind = KernelSpec::Kind::gaussian;
    kernel.h = 0.5;
    auto sigma2 = [](double, const Unit& u) { return 1.0 + 0.5 * u.covariates[0] * u.covariates[0]; };
    auto e_const = [](double, const Unit& u) { return 0.3 + 0.1 * std::tanh(u.covariates[0]); };
    ContinuousDesign d = optimal_pi_continuous(ds, sigma2, e_const, kernel, 0.0, 0.4, 1e-9);

    // With e constant in z the correction factor is 1: pi proportional to
    // sqrt(sigma2)/e. Check proportionality over interior (unclipped) units.
    double ratio = 0;
    bool set = false;
    for (int64_t i = 0; i < ds.size(); ++i) {
        const Unit& u = ds[i];
        const double shape = std::sqrt(sigma2(0.0, u)) / e_const(0.0, u);
        const double p = d.pi[static_cast<size_t>(i)];
        if (p > 1e-9 * 2 && p < 1.0 - 1e-12) {
            if (!set) {
                ratio = p / shape;
                set = true;
            } else {
                CHECK(p / shape == doctest::Approx(ratio).epsilon(1e-6));
            }
        }
    }
    CHECK(set);
}

TEST_CASE("optimal_pi_continuous: kernel-weighted budget holds to 1e-9") {
    std::vector<Unit> units;
    Rng rng(13);
    for (int i = 0; i < 80; ++i) units.push_back(make_unit(i, {rng.normal()}, rng.normal()));
    Dataset ds(std::move(units), TreatmentMode::continuous);
    KernelSpec kernel;
    kernel.kind = KernelSpec::Kind::gaussian;
    kernel.h = 0.6;
    auto sigma2 = [](double z, const Unit& u) { return 0.5 + z * z + u.covariates[0] * u.covariates[0]; };
    auto e_fn = [](double z, const Unit& u) {
        return 0.2 + 0.1 * std::tanh(z + u.covariates[0]) + 0.05 * z;
    };
    const double budget = 0.25;
    ContinuousDesign d = optimal_pi_continuous(ds, sigma2, e_fn, kernel, 0.3, budget, 1e-6);
    double spent = 0;
    for (size_t i = 0; i < d.pi.size(); ++i) {
        CHECK(d.pi[i] > 0);
        CHECK(d.pi[i] <= 1.0);
        spent += d.pi[i] * d.kernel_weight[i];
    }
    CHECK(spent / static_cast<double>(ds.size()) <= budget * (1 + 1e-9));
    CHECK(d.audit.feasible);
}

TEST_CASE("plan save/load round-trip against a dataset") {
    std::vector<Unit> units;
    for (int i = 0; i < 12; ++i) units.push_back(make_unit(100 + i, {static_cast<double>(i)}, i % 2));
    Dataset ds(std::move(units), TreatmentMode::binary);
    NuisanceSet nuis = oracle_nuisances(
        1, [](const std::vector<double>&) { return 0.0; },
        [](const std::vector<double>&) { return 0.0; },
        [](const std::vector<double>& x) { return 1.0 + x[0]; },
        [](const std::vector<double>& x) { return 2.0 + x[0]; },
        [](const std::vector<double>&) { return 0.5; });
    DesignProbabilities d = optimal_pi_global(ds, nuis, 0.4);
    BudgetSpec budget;
    budget.b = 0.4;
    AnnotationPlan plan = sample_plan(d, budget, 9);
    const std::string path =
        (std::filesystem::temp_directory_path() / "annobatch_plan.csv").string();
    save_plan(plan, ds, path);
    AnnotationPlan loaded = load_plan(path, ds);
    for (size_t i = 0; i < plan.pi.size(); ++i) {
        CHECK(loaded.pi[i] == plan.pi[i]);
        CHECK(loaded.r[i] == plan.r[i]);
    }
}
