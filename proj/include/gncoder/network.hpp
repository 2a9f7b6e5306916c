/// gncoder/network.hpp
///
/// Shallow network synthesis operator
///
///     Psi(alpha, w, theta)(x) = sum_j alpha_j * sigma(w_j . x + theta_j)
///
/// with hand-coded first and second parameter derivatives. Parameters are
/// stored flat in the order (alpha | w unit-major | theta); every Jacobian
/// and coefficient vector in the library shares this order.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gncoder/activations.hpp"
#include "gncoder/errors.hpp"
#include "gncoder/function_space.hpp"
#include "gncoder/linalg.hpp"

namespace gncoder
{
    inline constexpr double default_param_box = 10.0;

    template<typename Real>
    class BasicParams
    {
    public:
        using scalar_type = Real;

        BasicParams() = default;

        /// All-zero parameters for `units` neurons on `dim` inputs.
        BasicParams(std::size_t units, std::size_t dim)
            : units_(units), dim_(dim), flat_(units * (dim + 2), Real(0))
        {
            if(units == 0 || dim == 0)
                throw ShapeError("Params: unit count and input dimension must be positive");
        }

        BasicParams(std::size_t units, std::size_t dim, std::vector<Real> flat)
            : BasicParams(units, dim)
        {
            if(flat.size() != n_star())
                throw ShapeError("Params: flat vector has length " + std::to_string(flat.size()) +
                    ", expected " + std::to_string(n_star()));
            flat_ = std::move(flat);
        }

        std::size_t units() const noexcept { return units_; }
        std::size_t dim() const noexcept { return dim_; }
        std::size_t n_star() const noexcept { return units_ * (dim_ + 2); }

        std::size_t alpha_index(std::size_t s) const noexcept { return s; }
        std::size_t w_index(std::size_t s, std::size_t t) const noexcept { return units_ + s * dim_ + t; }
        std::size_t theta_index(std::size_t s) const noexcept { return units_ * (dim_ + 1) + s; }

        Real alpha(std::size_t s) const { return flat_[alpha_index(s)]; }
        Real w(std::size_t s, std::size_t t) const { return flat_[w_index(s, t)]; }
        Real theta(std::size_t s) const { return flat_[theta_index(s)]; }
        Real &alpha(std::size_t s) { return flat_[alpha_index(s)]; }
        Real &w(std::size_t s, std::size_t t) { return flat_[w_index(s, t)]; }
        Real &theta(std::size_t s) { return flat_[theta_index(s)]; }

        std::span<const Real> flat() const noexcept { return flat_; }
        std::span<Real> flat() noexcept { return flat_; }

        /// Pre-activation w_s . x + theta_s.
        Real argument(std::size_t s, std::span<const Real> x) const
        {
            Real z = theta(s);
            for(std::size_t t = 0; t < dim_; ++t)
                z += w(s, t) * x[t];
            return z;
        }

        bool same_shape(const BasicParams &o) const noexcept { return units_ == o.units_ && dim_ == o.dim_; }

        bool operator==(const BasicParams &) const = default;

        /// Same parameters in another precision.
        template<typename Other>
        BasicParams<Other> cast() const
        {
            std::vector<Other> f(flat_.begin(), flat_.end());
            return BasicParams<Other>(units_, dim_, std::move(f));
        }

    private:
        std::size_t units_ = 0;
        std::size_t dim_ = 0;
        std::vector<Real> flat_;
    };

    using Params = BasicParams<double>;

    template<typename Real>
    Real distance(const BasicParams<Real> &a, const BasicParams<Real> &b)
    {
        if(!a.same_shape(b))
            throw ShapeError("distance: parameter shapes differ");
        Real acc = 0;
        for(std::size_t i = 0; i < a.n_star(); ++i)
        {
            const Real d = a.flat()[i] - b.flat()[i];
            acc += d * d;
        }
        return std::sqrt(acc);
    }

    /// a + t * d
    template<typename Real>
    BasicParams<Real> offset(const BasicParams<Real> &a, std::span<const Real> d, Real t = Real(1))
    {
        if(d.size() != a.n_star())
            throw ShapeError("offset: direction has wrong length");
        BasicParams<Real> out = a;
        for(std::size_t i = 0; i < a.n_star(); ++i)
            out.flat()[i] += t * d[i];
        return out;
    }

    template<typename Real>
    BasicParams<Real> offset(const BasicParams<Real> &a, const Vec<Real> &d, Real t = Real(1))
    {
        return offset(a, std::span<const Real>(d), t);
    }

    template<typename Real>
    Vec<Real> difference(const BasicParams<Real> &a, const BasicParams<Real> &b)
    {
        if(!a.same_shape(b))
            throw ShapeError("difference: parameter shapes differ");
        Vec<Real> d(a.n_star());
        for(std::size_t i = 0; i < d.size(); ++i)
            d[i] = a.flat()[i] - b.flat()[i];
        return d;
    }

    template<typename Real>
    struct BasicJacobian
    {
        std::vector<BasicGridFunction<Real>> columns;
        BasicParams<Real> params;
    };

    using Jacobian = BasicJacobian<double>;

    namespace detail
    {
        template<typename Real>
        void require_grid_dim(const BasicParams<Real> &p, const BasicGrid<Real> &g, const char *where)
        {
            if(p.dim() != g.dim())
                throw ShapeError(std::string(where) + ": parameters have input dimension " +
                    std::to_string(p.dim()) + " but the grid has dimension " + std::to_string(g.dim()));
        }
    }

    template<typename Real>
    BasicGridFunction<Real> eval_psi(const BasicParams<Real> &p, const Activation &a, const BasicGridPtr<Real> &g)
    {
        detail::require_grid_dim(p, *g, "eval_psi");
        BasicGridFunction<Real> out(g);
        for(std::size_t k = 0; k < g->size(); ++k)
        {
            const auto x = g->node(k);
            Real acc = 0;
            for(std::size_t s = 0; s < p.units(); ++s)
                acc += p.alpha(s) * a.value(p.argument(s, x));
            out[k] = acc;
        }
        return out;
    }

    /// Columns d Psi / d p_i in flattening order:
    ///   d/d alpha_s   = sigma(z_s)
    ///   d/d w_s^t     = alpha_s sigma'(z_s) x_t
    ///   d/d theta_s   = alpha_s sigma'(z_s)
    template<typename Real>
    BasicJacobian<Real> jacobian(const BasicParams<Real> &p, const Activation &a, const BasicGridPtr<Real> &g)
    {
        detail::require_grid_dim(p, *g, "jacobian");
        if(!a.has_d1())
            throw SmoothnessError("jacobian: activation '" + a.to_string() + "' has no first derivative");

        BasicJacobian<Real> jac{std::vector<BasicGridFunction<Real>>(p.n_star(), BasicGridFunction<Real>(g)), p};
        for(std::size_t k = 0; k < g->size(); ++k)
        {
            const auto x = g->node(k);
            for(std::size_t s = 0; s < p.units(); ++s)
            {
                const Real z = p.argument(s, x);
                const Real ds = p.alpha(s) * a.d1(z);
                jac.columns[p.alpha_index(s)][k] = a.value(z);
                for(std::size_t t = 0; t < p.dim(); ++t)
                    jac.columns[p.w_index(s, t)][k] = ds * x[t];
                jac.columns[p.theta_index(s)][k] = ds;
            }
        }
        return jac;
    }

    /// h1^T D^2 Psi[p] h2 as a grid function. Only same-unit blocks are
    /// nonzero; writing u_s(h) = h_w[s] . x + h_theta[s] the six blocks sum to
    ///   sigma'(z_s) (h1_alpha[s] u_s(h2) + h2_alpha[s] u_s(h1))
    ///     + alpha_s sigma''(z_s) u_s(h1) u_s(h2)
    /// where the alpha-alpha block contributes nothing.
    template<typename Real>
    BasicGridFunction<Real> second_derivative_bilinear(const BasicParams<Real> &p, const Activation &a,
        const BasicGridPtr<Real> &g, std::span<const Real> h1, std::span<const Real> h2)
    {
        detail::require_grid_dim(p, *g, "second_derivative_bilinear");
        if(!a.has_d2())
            throw SmoothnessError("second_derivative_bilinear: activation '" + a.to_string() +
                "' has no second derivative");
        if(h1.size() != p.n_star() || h2.size() != p.n_star())
            throw ShapeError("second_derivative_bilinear: directions must have length " + std::to_string(p.n_star()));

        BasicGridFunction<Real> out(g);
        for(std::size_t k = 0; k < g->size(); ++k)
        {
            const auto x = g->node(k);
            Real acc = 0;
            for(std::size_t s = 0; s < p.units(); ++s)
            {
                const Real z = p.argument(s, x);
                Real u1 = h1[p.theta_index(s)];
                Real u2 = h2[p.theta_index(s)];
                for(std::size_t t = 0; t < p.dim(); ++t)
                {
                    u1 += h1[p.w_index(s, t)] * x[t];
                    u2 += h2[p.w_index(s, t)] * x[t];
                }
                const Real mixed = h1[p.alpha_index(s)] * u2 + h2[p.alpha_index(s)] * u1;
                acc += a.d1(z) * mixed + p.alpha(s) * a.d2(z) * u1 * u2;
            }
            out[k] = acc;
        }
        return out;
    }

    template<typename Real>
    BasicGridFunction<Real> second_derivative_bilinear(const BasicParams<Real> &p, const Activation &a,
        const BasicGridPtr<Real> &g, const Vec<Real> &h1, const Vec<Real> &h2)
    {
        return second_derivative_bilinear(p, a, g, std::span<const Real>(h1), std::span<const Real>(h2));
    }

    /// Uniform sample from the Euclidean ball B(center, radius).
    template<typename Real, typename Rng>
    BasicParams<Real> sample_ball(const BasicParams<Real> &center, Real radius, Rng &rng)
    {
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> uniform(0.0, 1.0);
        Vec<Real> d(center.n_star());
        Real len = 0;
        do
        {
            for(Real &v : d)
                v = static_cast<Real>(normal(rng));
            len = euclidean_norm(d);
        } while(len == 0);
        const Real r = radius * static_cast<Real>(std::pow(uniform(rng), 1.0 / static_cast<double>(d.size())));
        return offset(center, d, r / len);
    }

    /// Sampled estimates of C_I (max ||Psi'(q)||), C_L (max difference
    /// quotient of Psi' over sample pairs) and the pseudoinverse bound
    /// max ||Psi'(q)^+|| on B(p, radius). The center is always sample 0.
    template<typename Real>
    ConvergenceConstants lipschitz_constants(const BasicParams<Real> &p, const Activation &a,
        const BasicGridPtr<Real> &g, double radius, std::size_t samples, std::uint64_t seed,
        double param_box = default_param_box)
    {
        if(!(radius > 0.0) || !std::isfinite(radius))
            throw RangeError("lipschitz_constants: radius must be positive and finite");
        if(samples == 0)
            throw RangeError("lipschitz_constants: need at least one sample");
        for(Real v : p.flat())
            if(static_cast<double>(std::abs(v)) + radius > param_box)
                throw RangeError("lipschitz_constants: ball leaves the parameter box [-" +
                    std::to_string(param_box) + ", " + std::to_string(param_box) + "]");

        std::mt19937_64 rng(seed);
        std::vector<BasicParams<Real>> points{p};
        while(points.size() < samples)
            points.push_back(sample_ball(p, static_cast<Real>(radius), rng));

        std::vector<DenseMatrix<Real>> mats;
        mats.reserve(samples);
        ConvergenceConstants c;
        c.samples = samples;
        for(const auto &q : points)
        {
            mats.push_back(weighted_matrix(jacobian(q, a, g).columns));
            const DenseVector<Real> sv = singular_values(mats.back());
            c.c_i = std::max(c.c_i, static_cast<double>(sv(0)));
            const double smin = static_cast<double>(sv(sv.size() - 1));
            c.c_i_pinv = std::max(c.c_i_pinv, smin > 0.0 ? 1.0 / smin : std::numeric_limits<double>::infinity());
        }
        for(std::size_t i = 0; i < points.size(); ++i)
            for(std::size_t j = i + 1; j < points.size(); ++j)
            {
                const double dist = static_cast<double>(distance(points[i], points[j]));
                if(dist == 0.0)
                    continue;
                c.c_l = std::max(c.c_l, static_cast<double>(spectral_norm(DenseMatrix<Real>(mats[i] - mats[j]))) / dist);
                ++c.pairs;
            }
        c.insufficient_samples = c.pairs == 0;
        return c;
    }
}
