#include <cmath>
#include <cstdlib>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "gncoder/diagnostics.hpp"
#include "oracles.hpp"

using namespace gncoder;

namespace
{
    const Params bench(2, 1, {8, -5, 10, -7, -3, 6});

    Params along(const Params &p, double t, std::uint64_t seed)
    {
        std::mt19937_64 rng(seed);
        auto d = oracle::random_vector(p.n_star(), rng);
        const double n = euclidean_norm(d);
        for(double &x : d)
            x *= t / n;
        return offset(p, d);
    }
}

TEST(SampleParams, StaysInTheBox)
{
    std::mt19937_64 rng(1);
    const SamplerBox box{1.0, 2.0, 3.0, 0.1, false};
    for(int t = 0; t < 100; ++t)
    {
        const auto p = sample_params(3, 2, box, rng);
        for(std::size_t s = 0; s < 3; ++s)
        {
            EXPECT_LE(std::abs(p.alpha(s)), 1.0);
            EXPECT_GE(std::abs(p.alpha(s)), 0.1);
            EXPECT_LE(std::abs(p.w(s, 0)), 2.0);
            EXPECT_LE(std::abs(p.theta(s)), 3.0);
        }
    }
    EXPECT_THROW(sample_params(1, 1, SamplerBox{0.0, 1.0, 1.0, 0.0, true}, rng), RangeError);
    EXPECT_THROW(sample_params(1, 1, SamplerBox{0.1, 1.0, 1.0, 0.2, false}, rng), RangeError);
}

TEST(Independence, GenericSigmoidIsNondegenerate)
{
    const auto g = make_grid(2, 64);
    const auto reps = independence_trials(Activation::sigmoid(1.0), 3, 2, g, SamplerBox{}, 7, 5);
    ASSERT_EQ(reps.size(), 5u);
    for(std::size_t i = 0; i < reps.size(); ++i)
    {
        const auto &r = reps[i];
        EXPECT_EQ(r.seed, 7 + i);
        EXPECT_FALSE(r.degenerate);
        EXPECT_EQ(r.rank, 12u);
        EXPECT_EQ(r.qr_rank, 12u);
        EXPECT_NEAR(r.gram_condition, std::pow(r.max_singular_value / r.min_singular_value, 2), 1e-6 * r.gram_condition);
        EXPECT_EQ(r.activation, "sigmoid:1");
        EXPECT_EQ(r.points_per_axis, 64u);
    }
}

TEST(Independence, MirroredPairsAreDegenerate)
{
    const auto g = make_grid(1, 64);
    const Params base(2, 1, {1.0, -0.7, 2.0, 3.0, 0.5, -1.0});
    const auto m = mirrored(base);
    EXPECT_EQ(m.units(), 4u);
    EXPECT_EQ(m.w(1, 0), -2.0);
    EXPECT_EQ(m.theta(1), -0.5);
    // sigmoid' and tanh' are even, so the mirrored w- and theta-columns coincide
    EXPECT_TRUE(independence_report(m, Activation::sigmoid(1.0), g).degenerate);
    EXPECT_TRUE(independence_report(m, Activation::tanh(), g).degenerate);
    EXPECT_FALSE(independence_report(base, Activation::sigmoid(1.0), g).degenerate);
}

TEST(Independence, DuplicateUnitIsDegenerate)
{
    const auto g = make_grid(2, 16);
    std::mt19937_64 rng(3);
    const auto p = sample_params(3, 2, SamplerBox{}, rng);
    const auto d = duplicate_unit(p, 0, 2);
    EXPECT_EQ(d.w(2, 1), p.w(0, 1));
    EXPECT_EQ(d.alpha(2), p.alpha(2));
    const auto r = independence_report(d, Activation::sigmoid(1.0), g);
    EXPECT_TRUE(r.degenerate);
    EXPECT_LT(r.rank, 12u);
    EXPECT_THROW(duplicate_unit(p, 1, 1), ShapeError);
    EXPECT_THROW(duplicate_unit(p, 0, 3), ShapeError);
}

TEST(Independence, RankMatchesDenseOracle)
{
    const auto g = make_grid(1, 64);
    std::mt19937_64 rng(4);
    for(int t = 0; t < 10; ++t)
    {
        const auto p = sample_params(2, 1, SamplerBox{}, rng);
        const auto r = independence_report(p, Activation::sigmoid(1.0), g);
        const auto cols = jacobian(p, Activation::sigmoid(1.0), g).columns;
        EXPECT_EQ(r.rank, oracle::svd_rank(cols, r.rank_tol));
    }
}

TEST(Independence, Errors)
{
    const auto coarse = make_grid(2, 3);
    const Params p(3, 2);
    EXPECT_THROW(independence_report(p, Activation::sigmoid(1.0), coarse), ResolutionError);
    EXPECT_THROW(independence_report(Params(1, 1, {1, 1, 0}), Activation::step(), make_grid(1, 8)),
        SmoothnessError);
    EXPECT_THROW(independence_trial(Activation::sigmoid(1.0), 1, 1, make_grid(2, 8), SamplerBox{}, 0), ShapeError);
}

TEST(Independence, ResultDoesNotDependOnThreadCount)
{
    const auto g = make_grid(2, 16);
    auto run = [&](const char *threads) {
        setenv("GN_CODER_THREADS", threads, 1);
        auto r = independence_trials(Activation::sigmoid(1.0), 2, 2, g, SamplerBox{}, 11, 9);
        unsetenv("GN_CODER_THREADS");
        return r;
    };
    const auto one = run("1");
    const auto four = run("4");
    ASSERT_EQ(one.size(), four.size());
    for(std::size_t i = 0; i < one.size(); ++i)
    {
        EXPECT_EQ(one[i].seed, four[i].seed);
        EXPECT_EQ(one[i].min_singular_value, four[i].min_singular_value);
        EXPECT_EQ(distance(one[i].params, four[i].params), 0.0);
    }
}

TEST(Cone, SquareConfigurationDecomposesExactly)
{
    const auto g = make_grid(1, 6);
    const auto f = make_integration(g);
    std::vector<double> ratios;
    for(double t : {1e-2, 1e-3, 1e-4})
    {
        const auto r = cone_check(bench, along(bench, t, 5), Activation::sigmoid(1.0), g, f);
        EXPECT_LT(r.decomposition_residual, 1e-6);
        EXPECT_NEAR(r.dev / t, r.ratio, 1e-9 * r.ratio);
        ratios.push_back(r.ratio);
    }
    const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
    EXPECT_LE(*hi / *lo, 2.0);
}

TEST(Cone, IdenticalPoints)
{
    const auto g = make_grid(1, 16);
    const auto r = cone_check(bench, bench, Activation::sigmoid(1.0), g, make_identity(g));
    EXPECT_TRUE(std::isnan(r.ratio));
    EXPECT_LT(r.dev, 1e-8);
    EXPECT_LT(r.decomposition_residual, 1e-8);
}

TEST(Cone, Errors)
{
    const auto g = make_grid(1, 16);
    const Params twins(2, 1, {1, 1, 2, 2, 0.5, 0.5});
    EXPECT_THROW(cone_check(twins, bench, Activation::sigmoid(1.0), g, make_identity(g)), RankError);
    EXPECT_THROW(cone_check(bench, Params(1, 1), Activation::sigmoid(1.0), g, make_identity(g)), ShapeError);
}

TEST(Mysovskii, TrivialCasesGiveZero)
{
    const auto g = make_grid(1, 64);
    const auto f = make_integration(g);
    const std::vector<double> s{0.0, 0.5, 1.0};
    const auto same = mysovskii_check(bench, bench, s, Activation::sigmoid(1.0), g, f, 1e-10, 12.0);
    EXPECT_EQ(same.max_ratio, 0.0);
    ASSERT_EQ(same.points.size(), 3u);

    const auto q = along(bench, 0.1, 6);
    const auto rep = mysovskii_check(bench, q, s, Activation::sigmoid(1.0), g, f, 1e-10, 12.0);
    EXPECT_EQ(rep.points[0].bound_ratio, 0.0);
    EXPECT_GT(rep.points[1].bound_ratio, 0.0);
    EXPECT_TRUE(std::isfinite(rep.max_ratio));
}

TEST(Mysovskii, AlphaOnlyDifferenceHasNoCurvature)
{
    // the alpha columns do not depend on alpha
    const auto g = make_grid(1, 64);
    auto q = bench;
    q.alpha(0) += 0.4;
    const std::vector<double> s{0.25, 1.0};
    const auto rep = mysovskii_check(bench, q, s, Activation::sigmoid(1.0), g, make_identity(g), 1e-10, 12.0);
    EXPECT_LT(rep.max_ratio, 1e-10);
}

TEST(Mysovskii, Errors)
{
    const auto g = make_grid(1, 64);
    const std::vector<double> bad{1.5};
    EXPECT_THROW(mysovskii_check(bench, bench, bad, Activation::sigmoid(1.0), g, make_identity(g), 1e-10, 12.0),
        RangeError);
    const std::vector<double> s{0.5};
    EXPECT_THROW(mysovskii_check(bench, bench, s, Activation::sigmoid(1.0), g, make_identity(g), 1e-10, 5.0),
        RangeError);
}

TEST(Manifold, Values)
{
    const auto a = manifold_demo(1.0, 0.0);
    EXPECT_EQ(a.f1, 0.0);
    EXPECT_EQ(a.f2, 1.0);
    EXPECT_EQ(a.det, -2.0);
    EXPECT_EQ(manifold_demo(0.0, 1.0).det, 2.0);
    EXPECT_EQ(manifold_demo(0.3, 0.3).det, 0.0);
    EXPECT_EQ(manifold_demo(0.3, -0.3).det, 0.0);
    EXPECT_EQ(manifold_demo(2.0, 3.0).f1, 6.0);
}

TEST(Manifold, SweepFormat)
{
    std::ostringstream os;
    manifold_sweep(os, -1.0, 1.0, 3);
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "x,y,f1,f2,det");
    std::size_t rows = 0;
    while(std::getline(in, line))
        ++rows;
    EXPECT_EQ(rows, 9u);
    EXPECT_THROW(manifold_sweep(os, 1.0, -1.0, 3), RangeError);
    EXPECT_THROW(manifold_sweep(os, -1.0, 1.0, 1), RangeError);
}
