/// gncoder/diagnostics.hpp
///
/// Numerical probes of the structural hypotheses behind Gauss-Newton on
/// network-coded problems: linear independence of the derivative columns,
/// the order-reversed tangential cone condition, the generalized
/// Newton-Mysovskii bound, and the planar map F(x,y) = (xy, x^2+y^2) whose
/// Jacobian degenerates on the diagonals.
///
/// Independence trials are Monte-Carlo evidence. A nondegenerate report
/// says nothing about parameters that were not drawn.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "gncoder/activations.hpp"
#include "gncoder/errors.hpp"
#include "gncoder/forward_ops.hpp"
#include "gncoder/function_space.hpp"
#include "gncoder/linalg.hpp"
#include "gncoder/network.hpp"

namespace gncoder
{
    /// Half-widths of the uniform parameter sampler: alpha in [-alpha, alpha],
    /// w in [-w, w]^n, theta in [-theta, theta].
    struct SamplerBox
    {
        double alpha = 2.0;
        double w = 5.0;
        double theta = 3.0;
        /// Redraw alpha_s while |alpha_s| < alpha_band, unless allow_zero_alpha.
        double alpha_band = 0.05;
        bool allow_zero_alpha = false;

        void validate() const
        {
            if(!(alpha > 0.0) || !(w > 0.0) || !(theta > 0.0))
                throw RangeError("sampler box: half-widths must be positive");
            if(!allow_zero_alpha && !(alpha_band < alpha))
                throw RangeError("sampler box: alpha band leaves nothing to sample");
        }
    };

    /// Uniform draw from the sampler box.
    template<typename Real = double, typename Rng>
    BasicParams<Real> sample_params(std::size_t units, std::size_t dim, const SamplerBox &box, Rng &rng)
    {
        box.validate();
        std::uniform_real_distribution<double> ua(-box.alpha, box.alpha);
        std::uniform_real_distribution<double> uw(-box.w, box.w);
        std::uniform_real_distribution<double> ut(-box.theta, box.theta);
        BasicParams<Real> p(units, dim);
        for(std::size_t s = 0; s < units; ++s)
        {
            double a = ua(rng);
            while(!box.allow_zero_alpha && std::abs(a) < box.alpha_band)
                a = ua(rng);
            p.alpha(s) = static_cast<Real>(a);
        }
        for(std::size_t s = 0; s < units; ++s)
            for(std::size_t t = 0; t < dim; ++t)
                p.w(s, t) = static_cast<Real>(uw(rng));
        for(std::size_t s = 0; s < units; ++s)
            p.theta(s) = static_cast<Real>(ut(rng));
        return p;
    }

    struct IndependenceReport
    {
        std::string activation;
        std::size_t units = 0;
        std::size_t dim = 0;
        std::size_t points_per_axis = 0;
        std::uint64_t seed = 0;
        double min_singular_value = 0.0;
        double max_singular_value = 0.0;
        /// Numerical rank from the dense SVD.
        std::size_t rank = 0;
        /// Rank found by weighted_qr; agrees with `rank` away from the threshold.
        std::size_t qr_rank = 0;
        bool degenerate = false;
        /// Condition number of the Gram matrix, (max_sv / min_sv)^2.
        double gram_condition = 0.0;
        double rank_tol = default_rank_tol;
        Params params;
    };

    /// Independence report for given parameters.
    inline IndependenceReport independence_report(const Params &p, const Activation &a, const GridPtr &g,
        double rank_tol = default_rank_tol, std::uint64_t seed = 0)
    {
        if(!a.has_d1())
            throw SmoothnessError("independence: activation '" + a.to_string() + "' has no first derivative");
        if(p.n_star() > g->size())
            throw ResolutionError("independence: " + std::to_string(p.n_star()) + " columns cannot be independent on " +
                std::to_string(g->size()) + " nodes");

        const auto cols = jacobian(p, a, g).columns;
        const Eigen::VectorXd sv = singular_values(weighted_matrix(cols));

        IndependenceReport r;
        r.activation = a.to_string();
        r.units = p.units();
        r.dim = p.dim();
        r.points_per_axis = g->points_per_axis();
        r.seed = seed;
        r.max_singular_value = sv(0);
        r.min_singular_value = sv(sv.size() - 1);
        r.rank = numerical_rank(sv, rank_tol);
        r.degenerate = r.min_singular_value < rank_tol * r.max_singular_value;
        r.gram_condition = r.min_singular_value > 0.0
            ? (r.max_singular_value / r.min_singular_value) * (r.max_singular_value / r.min_singular_value)
            : std::numeric_limits<double>::infinity();
        r.rank_tol = rank_tol;
        try
        {
            r.qr_rank = weighted_qr(cols, rank_tol).rank;
        }
        catch(const ZeroMatrixError &)
        {
            r.qr_rank = 0;
        }
        r.params = p;
        return r;
    }

    /// One seeded trial: random parameters from the box, then the report.
    inline IndependenceReport independence_trial(const Activation &a, std::size_t units, std::size_t dim,
        const GridPtr &g, const SamplerBox &box, std::uint64_t seed, double rank_tol = default_rank_tol)
    {
        if(dim != g->dim())
            throw ShapeError("independence_trial: input dimension does not match the grid");
        const std::size_t n_star = units * (dim + 2);
        if(n_star > g->size())
            throw ResolutionError("independence_trial: " + std::to_string(n_star) +
                " columns cannot be independent on " + std::to_string(g->size()) + " nodes");
        std::mt19937_64 rng(seed);
        return independence_report(sample_params(units, dim, box, rng), a, g, rank_tol, seed);
    }

    /// Worker count: GN_CODER_THREADS if set and positive (at most 256), else the hardware count.
    inline std::size_t worker_count()
    {
        std::size_t n = std::max(1u, std::thread::hardware_concurrency());
        if(const char *env = std::getenv("GN_CODER_THREADS"))
        {
            char *end = nullptr;
            const long v = std::strtol(env, &end, 10);
            if(end != env && *end == '\0' && v > 0)
                n = static_cast<std::size_t>(std::min(v, 256L));
        }
        return n;
    }

    /// Trials seed, seed+1, ..., spread over worker_count() threads; the
    /// result is in trial order whatever the thread count.
    inline std::vector<IndependenceReport> independence_trials(const Activation &a, std::size_t units,
        std::size_t dim, const GridPtr &g, const SamplerBox &box, std::uint64_t seed, std::size_t trials,
        double rank_tol = default_rank_tol)
    {
        std::vector<IndependenceReport> out(trials);
        const std::size_t workers = std::min(worker_count(), std::max<std::size_t>(trials, 1));
        auto work = [&](std::size_t w, std::exception_ptr &err) {
            try
            {
                for(std::size_t i = w; i < trials; i += workers)
                    out[i] = independence_trial(a, units, dim, g, box, seed + i, rank_tol);
            }
            catch(...)
            {
                err = std::current_exception();
            }
        };
        std::vector<std::exception_ptr> errors(workers);
        if(workers == 1)
            work(0, errors[0]);
        else
        {
            std::vector<std::thread> pool;
            for(std::size_t w = 0; w < workers; ++w)
                pool.emplace_back(work, w, std::ref(errors[w]));
            for(auto &t : pool)
                t.join();
        }
        for(const auto &e : errors)
            if(e)
                std::rethrow_exception(e);
        return out;
    }

    /// 2N units: every unit (alpha, w, theta) followed by its mirror
    /// (alpha, -w, -theta). For an activation with even derivative the two
    /// w- and theta-columns of each pair coincide.
    template<typename Real>
    BasicParams<Real> mirrored(const BasicParams<Real> &p)
    {
        const std::size_t n = p.units();
        BasicParams<Real> out(2 * n, p.dim());
        for(std::size_t s = 0; s < n; ++s)
        {
            for(std::size_t k = 0; k < 2; ++k)
            {
                const std::size_t u = 2 * s + k;
                const Real sign = k == 0 ? Real(1) : Real(-1);
                out.alpha(u) = p.alpha(s);
                for(std::size_t t = 0; t < p.dim(); ++t)
                    out.w(u, t) = sign * p.w(s, t);
                out.theta(u) = sign * p.theta(s);
            }
        }
        return out;
    }

    /// Copy of p with unit `to` given the inner weights of unit `from`.
    template<typename Real>
    BasicParams<Real> duplicate_unit(const BasicParams<Real> &p, std::size_t from, std::size_t to)
    {
        if(from >= p.units() || to >= p.units() || from == to)
            throw ShapeError("duplicate_unit: need two distinct existing units");
        BasicParams<Real> out = p;
        for(std::size_t t = 0; t < p.dim(); ++t)
            out.w(to, t) = p.w(from, t);
        out.theta(to) = p.theta(from);
        return out;
    }

    struct ConeReport
    {
        Params p1;
        Params p2;
        /// R with Psi'(p2) = Psi'(p1) R on span Psi'(p1).
        Eigen::MatrixXd r_matrix;
        /// ||R - I||_2
        double dev = 0.0;
        /// ||N'(p2) - N'(p1) R||_2 / ||N'(p2)||_2
        double decomposition_residual = 0.0;
        /// dev / ||p2 - p1||, NaN when p1 = p2
        double ratio = std::numeric_limits<double>::quiet_NaN();
    };

    inline ConeReport cone_check(const Params &p1, const Params &p2, const Activation &a, const GridPtr &g,
        const LinearOperator &f, double rank_tol = default_rank_tol)
    {
        if(!p1.same_shape(p2))
            throw ShapeError("cone_check: parameter shapes differ");
        const auto c1 = jacobian(p1, a, g).columns;
        const auto c2 = jacobian(p2, a, g).columns;
        const QRFactors qr = weighted_qr(c1, rank_tol);
        if(!qr.full_rank())
            throw RankError("cone_check: Psi'(p1) is rank deficient by " + std::to_string(qr.deficit()),
                qr.deficit());

        const auto n = static_cast<Eigen::Index>(p1.n_star());
        ConeReport rep{p1, p2, Eigen::MatrixXd(n, n), 0.0, 0.0, std::numeric_limits<double>::quiet_NaN()};
        for(Eigen::Index j = 0; j < n; ++j)
        {
            const Coeffs col = pinv_apply(qr, c2[static_cast<std::size_t>(j)], PinvMode::Strict);
            for(Eigen::Index i = 0; i < n; ++i)
                rep.r_matrix(i, j) = col[static_cast<std::size_t>(i)];
        }
        rep.dev = spectral_norm(Eigen::MatrixXd(rep.r_matrix - Eigen::MatrixXd::Identity(n, n)));

        const Eigen::MatrixXd n1 = weighted_matrix(apply_all(f, c1));
        const Eigen::MatrixXd n2 = weighted_matrix(apply_all(f, c2));
        const double scale = spectral_norm(n2);
        const double res = spectral_norm(Eigen::MatrixXd(n2 - n1 * rep.r_matrix));
        rep.decomposition_residual = scale > 0.0 ? res / scale : res;

        const double d = distance(p1, p2);
        if(d > 0.0)
            rep.ratio = rep.dev / d;
        return rep;
    }

    struct MysovskiiPoint
    {
        double s = 0.0;
        /// ||N'(p)^+ (N'(q + s(p-q)) - N'(q)) (p-q)||
        double lhs = 0.0;
        /// lhs / (s ||p-q||^2), 0 when s = 0 or p = q
        double bound_ratio = 0.0;
    };

    struct MysovskiiReport
    {
        std::vector<MysovskiiPoint> points;
        double max_ratio = 0.0;
    };

    inline MysovskiiReport mysovskii_check(const Params &p, const Params &q, std::span<const double> s_values,
        const Activation &a, const GridPtr &g, const LinearOperator &f, double rank_tol = default_rank_tol,
        double param_box = default_param_box)
    {
        if(!p.same_shape(q))
            throw ShapeError("mysovskii_check: parameter shapes differ");
        for(std::size_t i = 0; i < p.n_star(); ++i)
            if(std::abs(p.flat()[i]) > param_box || std::abs(q.flat()[i]) > param_box)
                throw RangeError("mysovskii_check: segment leaves the parameter box");

        const QRFactors qr = weighted_qr(apply_all(f, jacobian(p, a, g).columns), rank_tol);
        if(!qr.full_rank())
            throw RankError("mysovskii_check: N'(p) is rank deficient by " + std::to_string(qr.deficit()),
                qr.deficit());

        const Coeffs d = difference(p, q);
        const double d2 = euclidean_norm(d) * euclidean_norm(d);
        const GridFunction base = combine(jacobian(q, a, g).columns, d);

        MysovskiiReport rep;
        for(double s : s_values)
        {
            if(!(s >= 0.0 && s <= 1.0))
                throw RangeError("mysovskii_check: s must lie in [0, 1]");
            MysovskiiPoint pt{s, 0.0, 0.0};
            if(s > 0.0 && d2 > 0.0)
            {
                const Params ps = offset(q, d, s);
                const GridFunction diff = combine(jacobian(ps, a, g).columns, d) - base;
                pt.lhs = euclidean_norm(pinv_apply(qr, f.apply(diff), PinvMode::Strict));
                pt.bound_ratio = pt.lhs / (s * d2);
            }
            rep.max_ratio = std::max(rep.max_ratio, pt.bound_ratio);
            rep.points.push_back(pt);
        }
        return rep;
    }

    struct ManifoldPoint
    {
        double f1 = 0.0;
        double f2 = 0.0;
        double det = 0.0;
    };

    /// F(x, y) = (xy, x^2 + y^2) and det grad F = 2(y^2 - x^2).
    inline ManifoldPoint manifold_demo(double x, double y)
    {
        return {x * y, x * x + y * y, 2.0 * (y * y - x * x)};
    }

    /// CSV x,y,f1,f2,det on a steps x steps grid over [lo, hi]^2, x slowest.
    inline void manifold_sweep(std::ostream &os, double lo, double hi, std::size_t steps)
    {
        if(steps < 2 || !(hi > lo))
            throw RangeError("manifold_sweep: need steps >= 2 and hi > lo");
        os << "x,y,f1,f2,det\n";
        os << std::setprecision(17);
        // coordinates mirror exactly about the midpoint, so both diagonals land on det = 0
        const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
        const double last = static_cast<double>(steps - 1);
        auto coord = [&](std::size_t i) { return mid + half * ((2.0 * static_cast<double>(i) - last) / last); };
        for(std::size_t i = 0; i < steps; ++i)
        {
            const double x = coord(i);
            for(std::size_t j = 0; j < steps; ++j)
            {
                const double y = coord(j);
                const ManifoldPoint m = manifold_demo(x, y);
                os << x << ',' << y << ',' << m.f1 << ',' << m.f2 << ',' << m.det << '\n';
            }
        }
    }
}
