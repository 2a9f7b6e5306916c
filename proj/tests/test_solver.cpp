#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gncoder/solver.hpp"
#include "oracles.hpp"

using namespace gncoder;

namespace
{
    template<typename Real = double>
    BasicParams<Real> truth()
    {
        return BasicParams<Real>(2, 1, {8, -5, 10, -7, -3, 6});
    }

    template<typename Real = double>
    BasicSolveConfig<Real> benchmark(const std::string &op = "volterra", std::size_t m = 64)
    {
        BasicSolveConfig<Real> cfg;
        cfg.grid = make_grid<Real>(1, m);
        cfg.forward_operator = op;
        cfg.truth = truth<Real>();
        cfg.data = make_operator<Real>(op, cfg.grid).apply(eval_psi(*cfg.truth, cfg.activation, cfg.grid));
        cfg.initial = *cfg.truth;
        cfg.param_box = 12.0;
        return cfg;
    }

    template<typename Real>
    BasicParams<Real> perturbed(const BasicParams<Real> &p, double r, std::uint64_t seed)
    {
        std::mt19937_64 rng(seed);
        const auto u = oracle::random_vector(p.n_star(), rng);
        const double n = euclidean_norm(u);
        Vec<Real> d(u.size());
        for(std::size_t i = 0; i < u.size(); ++i)
            d[i] = static_cast<Real>(r * u[i] / n);
        return offset(p, d);
    }

    double misfit(const Params &p, const Problem &prob)
    {
        const auto r = prob.residual(p);
        return 0.5 * inner_product(r, r);
    }
}

TEST(GaussNewtonStep, ZeroResidualIsAFixedPoint)
{
    const auto cfg = benchmark();
    const auto prob = Problem::from_config(cfg);
    const auto s = gauss_newton_step(truth(), prob);
    EXPECT_FALSE(s.rank_deficient);
    EXPECT_LT(s.residual_norm, 1e-14);
    EXPECT_LT(s.step_norm, 1e-10);
    EXPECT_LT(distance(s.next, truth()), 1e-10);
}

TEST(GaussNewtonStep, AlphaOnlyPerturbationIsSolvedInOneStep)
{
    const auto cfg = benchmark("identity");
    const auto prob = Problem::from_config(cfg);
    auto p0 = truth();
    p0.alpha(0) += 0.3;
    p0.alpha(1) -= 0.2;
    const auto s = gauss_newton_step(p0, prob);
    EXPECT_LT(distance(s.next, truth()), 1e-8);
}

TEST(GaussNewtonStep, RankDeficiencyLeavesPointUnchanged)
{
    auto cfg = benchmark("identity");
    const auto prob = Problem::from_config(cfg);
    const Params twins(2, 1, {1, 1, 2, 2, 0.5, 0.5});
    const auto s = gauss_newton_step(twins, prob);
    EXPECT_TRUE(s.rank_deficient);
    EXPECT_EQ(s.deficit, 3u);
    EXPECT_EQ(distance(s.next, twins), 0.0);
}

TEST(Solve, StartingAtTruthConvergesImmediately)
{
    const auto tr = solve(benchmark());
    EXPECT_EQ(tr.status(), SolveStatus::ConvergedResidual);
    EXPECT_EQ(tr.iterations(), 0u);
    EXPECT_EQ(tr.records.size(), 1u);
}

TEST(Solve, QuadraticErrorDecayInExtendedPrecision)
{
    auto cfg = benchmark<long double>();
    cfg.initial = perturbed(*cfg.truth, 0.05, 1);
    cfg.tol_residual = 1e-15;
    cfg.tol_step = 1e-18;
    const auto tr = solve(cfg);
    const auto e = tr.param_errors();
    ASSERT_GE(e.size(), 4u);
    EXPECT_LT(e.back(), 1e-10);
    // e_{k+1} / e_k^2 stays bounded while e_k is resolvable
    for(std::size_t k = 0; k + 1 < e.size() && e[k + 1] > 1e-15; ++k)
        EXPECT_LT(e[k + 1] / (e[k] * e[k]), 1e3) << k;
    EXPECT_GE(convergence_order(tr), 1.7);
}

TEST(Solve, RankDeficientStart)
{
    auto cfg = benchmark("identity");
    cfg.initial = Params(2, 1, {1, 1, 2, 2, 0.5, 0.5});
    const auto tr = solve(cfg);
    EXPECT_EQ(tr.status(), SolveStatus::RankDeficient);
    EXPECT_EQ(tr.deficit, 3u);
}

TEST(Solve, MaxItersAndClamping)
{
    auto cfg = benchmark();
    cfg.initial = perturbed(*cfg.truth, 0.05, 2);
    cfg.max_iters = 1;
    const auto tr = solve(cfg);
    EXPECT_EQ(tr.status(), SolveStatus::MaxIters);
    EXPECT_EQ(tr.records.size(), 2u);

    cfg.max_iters = 5;
    cfg.param_box = 9.0; // |w_1| = 10 lies outside
    cfg.initial = perturbed(*cfg.truth, 0.05, 2);
    for(double &v : cfg.initial.flat())
        v = std::clamp(v, -9.0, 9.0);
    const auto clamped = solve(cfg);
    EXPECT_GT(clamped.boundary_events, 0u);
    for(double v : clamped.final_params.flat())
        EXPECT_LE(std::abs(v), 9.0);
}

TEST(Solve, Deterministic)
{
    auto cfg = benchmark();
    cfg.initial = perturbed(*cfg.truth, 0.05, 3);
    const auto a = solve(cfg);
    const auto b = solve(cfg);
    ASSERT_EQ(a.records.size(), b.records.size());
    for(std::size_t i = 0; i < a.records.size(); ++i)
    {
        EXPECT_EQ(a.records[i].residual, b.records[i].residual);
        EXPECT_EQ(a.records[i].param_error, b.records[i].param_error);
    }
    EXPECT_EQ(distance(a.final_params, b.final_params), 0.0);
}

TEST(Solve, GradientDescentDecreasesResidual)
{
    auto cfg = benchmark();
    cfg.initial = perturbed(*cfg.truth, 0.05, 4);
    cfg.mode = SolveMode::GradientDescent;
    cfg.step_size = 1e-1;
    cfg.max_iters = 50;
    const auto tr = solve(cfg);
    EXPECT_EQ(tr.status(), SolveStatus::MaxIters);
    EXPECT_LT(tr.records.back().residual, tr.records.front().residual);
}

TEST(SolveConfig, Validation)
{
    auto cfg = benchmark();
    cfg.activation = Activation::relu();
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.activation = Activation::step();
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = benchmark();
    cfg.max_iters = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = benchmark();
    cfg.initial = Params(2, 2);
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = benchmark();
    cfg.data = GridFunction(make_grid(1, 8));
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = benchmark();
    cfg.mode = SolveMode::GradientDescent;
    cfg.step_size = 0.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(MisfitGradient, MatchesFiniteDifferences)
{
    const auto cfg = benchmark();
    const auto prob = Problem::from_config(cfg);
    for(std::uint64_t seed = 0; seed < 5; ++seed)
    {
        const auto p = perturbed(truth(), 0.5, seed);
        const auto g = misfit_gradient(p, prob);
        const auto fd = oracle::fd_gradient([&](const Params &q) { return misfit(q, prob); }, p, 1e-6);
        EXPECT_LT(oracle::relative_diff(g, fd), 1e-6);
    }
}

TEST(GradientStep, DescendsForSmallSteps)
{
    const auto prob = Problem::from_config(benchmark());
    const auto p = perturbed(truth(), 0.5, 7);
    EXPECT_LT(misfit(gradient_step(p, prob, 1e-3), prob), misfit(p, prob));
    EXPECT_THROW(gradient_step(p, prob, 0.0), RangeError);
}

TEST(Tikhonov, ZeroLambdaIsTheMisfit)
{
    const auto prob = Problem::from_config(benchmark());
    const auto p = perturbed(truth(), 0.5, 8);
    TikhonovObjective state{0.0, TikhonovVariant::StateSpace, GridFunction(prob.grid, 3.0), {}};
    TikhonovObjective param{0.0, TikhonovVariant::ParameterSpace, {}, Vec<double>(p.n_star(), 1.0)};
    const auto r = prob.residual(p);
    EXPECT_EQ(tikhonov_value_grad(state, p, prob).first, inner_product(r, r));
    EXPECT_EQ(tikhonov_value_grad(param, p, prob).first, inner_product(r, r));
}

TEST(Tikhonov, PriorAtPsiAddsNothing)
{
    const auto prob = Problem::from_config(benchmark());
    const auto p = perturbed(truth(), 0.5, 9);
    TikhonovObjective obj{2.5, TikhonovVariant::StateSpace, eval_psi(p, prob.activation, prob.grid), {}};
    TikhonovObjective plain{0.0, TikhonovVariant::StateSpace, obj.prior, {}};
    const auto [v, g] = tikhonov_value_grad(obj, p, prob);
    const auto [v0, g0] = tikhonov_value_grad(plain, p, prob);
    EXPECT_EQ(v, v0);
    EXPECT_LT(oracle::max_abs_diff(g, g0), 1e-12);
}

TEST(Tikhonov, GradientsMatchFiniteDifferences)
{
    const auto prob = Problem::from_config(benchmark());
    std::mt19937_64 rng(10);
    for(std::uint64_t seed = 0; seed < 3; ++seed)
    {
        const auto p = perturbed(truth(), 0.5, 20 + seed);
        std::vector<TikhonovObjective> objs;
        objs.push_back({0.1, TikhonovVariant::StateSpace, oracle::random_function(prob.grid, rng), {}});
        Vec<double> rho(p.n_star());
        for(double &x : rho)
            x = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
        objs.push_back({0.1, TikhonovVariant::ParameterSpace, {}, rho});
        for(const auto &obj : objs)
        {
            const auto g = tikhonov_value_grad(obj, p, prob).second;
            const auto fd = oracle::fd_gradient(
                [&](const Params &q) { return tikhonov_value_grad(obj, q, prob).first; }, p, 1e-6);
            EXPECT_LT(oracle::relative_diff(g, fd), 1e-6);
        }
    }
}

TEST(Tikhonov, Errors)
{
    const auto prob = Problem::from_config(benchmark());
    const auto p = truth();
    EXPECT_THROW(tikhonov_value_grad(TikhonovObjective{-1.0, TikhonovVariant::ParameterSpace, {}, Vec<double>(6, 1.0)},
                     p, prob),
        RangeError);
    EXPECT_THROW(tikhonov_value_grad(TikhonovObjective{1.0, TikhonovVariant::ParameterSpace, {}, Vec<double>(2, 1.0)},
                     p, prob),
        ShapeError);
    EXPECT_THROW(tikhonov_value_grad(TikhonovObjective{1.0, TikhonovVariant::StateSpace, {}, {}}, p, prob), ShapeError);
}

TEST(RadiusCheck, Examples)
{
    ConvergenceConstants c;
    c.rho = 1.0;
    c.c_i = 1.0;
    c.c_l = 1.0;
    EXPECT_DOUBLE_EQ(radius_check(c).h, 0.5);
    EXPECT_TRUE(radius_check(c).satisfied);
    c.c_l = 2.0;
    EXPECT_DOUBLE_EQ(radius_check(c).h, 1.0);
    EXPECT_FALSE(radius_check(c).satisfied);
    c.rho = -1.0;
    EXPECT_THROW(radius_check(c), RangeError);
}

TEST(ConvergenceOrder, Examples)
{
    const std::vector<double> quad{1e-1, 1e-2, 1e-4, 1e-8};
    EXPECT_NEAR(convergence_order(quad), 2.0, 1e-12);
    const std::vector<double> lin{1e-1, 1e-2, 1e-3, 1e-4};
    EXPECT_NEAR(convergence_order(lin), 1.0, 1e-12);
    const std::vector<double> cubic{5e-2, 1.25e-4, 1.953125e-12};
    EXPECT_NEAR(convergence_order(cubic), 3.0, 1e-9);
}

TEST(ConvergenceOrder, InsufficientData)
{
    const std::vector<double> short_run{1e-2, 1e-4};
    EXPECT_THROW(convergence_order(short_run), InsufficientDataError);
    const std::vector<double> underflow{1e-2, 1e-4, 1e-16, 1e-30};
    EXPECT_THROW(convergence_order(underflow), InsufficientDataError);
    const std::vector<double> flat{1e-3, 1e-3, 1e-3};
    EXPECT_THROW(convergence_order(flat), InsufficientDataError);
}

TEST(StatusNames, AreStable)
{
    EXPECT_STREQ(to_string(SolveStatus::ConvergedResidual), "converged_residual");
    EXPECT_STREQ(to_string(SolveStatus::ConvergedStep), "converged_step");
    EXPECT_STREQ(to_string(SolveStatus::MaxIters), "max_iters");
    EXPECT_STREQ(to_string(SolveStatus::RankDeficient), "rank_deficient");
    EXPECT_STREQ(to_string(SolveStatus::NumericError), "numeric_error");
}
