/// gncoder/forward_ops.hpp
///
/// Bounded linear forward operators F on grid functions: identity, the 1-D
/// Volterra integration operator and a reflective Gaussian blur. All of them
/// are injective on the discrete space; ill-posedness shows up as conditioning.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gncoder/errors.hpp"
#include "gncoder/function_space.hpp"
#include "gncoder/linalg.hpp"

namespace gncoder
{
    template<typename Real>
    class BasicLinearOperator
    {
    public:
        using GridFunction = BasicGridFunction<Real>;
        using GridPtr = BasicGridPtr<Real>;
        using Map = std::function<GridFunction(const GridFunction &)>;

        /// Largest node count for which a dense matrix may be materialized.
        static constexpr std::size_t dense_limit = 4096;
        /// Grids up to this size get an SVD rank check at construction.
        static constexpr std::size_t spot_check_limit = 64;

        BasicLinearOperator(std::string descriptor, GridPtr in, GridPtr out, Map apply, Map adjoint, bool injective)
            : descriptor_(std::move(descriptor)), in_(std::move(in)), out_(std::move(out)),
              apply_(std::move(apply)), adjoint_(std::move(adjoint)), injective_(injective)
        {
            if(injective_ && in_->size() <= spot_check_limit)
            {
                const DenseVector<Real> sv = gncoder::singular_values(dense());
                if(numerical_rank(sv, 1e-13) < in_->size())
                    injective_ = false;
            }
        }

        const std::string &descriptor() const noexcept { return descriptor_; }
        const GridPtr &in_grid() const noexcept { return in_; }
        const GridPtr &out_grid() const noexcept { return out_; }
        bool injective() const noexcept { return injective_; }

        GridFunction apply(const GridFunction &u) const
        {
            if(!(*u.grid() == *in_))
                throw IncompatibleError("LinearOperator '" + descriptor_ + "': input is not on the operator grid");
            return apply_(u);
        }

        GridFunction adjoint(const GridFunction &v) const
        {
            if(!(*v.grid() == *out_))
                throw IncompatibleError("LinearOperator '" + descriptor_ + "': adjoint input is not on the output grid");
            return adjoint_(v);
        }

        GridFunction operator()(const GridFunction &u) const { return apply(u); }

        /// Matrix of F between the weighted spaces, D_out^1/2 A D_in^-1/2, so
        /// its Euclidean singular values are the L2 singular values of F.
        DenseMatrix<Real> dense() const
        {
            if(in_->size() > dense_limit || out_->size() > dense_limit)
                throw SizeError("LinearOperator '" + descriptor_ + "': dense realization limited to " +
                    std::to_string(dense_limit) + " nodes");
            const auto win = in_->weights();
            const auto wout = out_->weights();
            DenseMatrix<Real> m(static_cast<Eigen::Index>(out_->size()), static_cast<Eigen::Index>(in_->size()));
            GridFunction e(in_);
            for(std::size_t j = 0; j < in_->size(); ++j)
            {
                e[j] = Real(1);
                const GridFunction col = apply_(e);
                e[j] = Real(0);
                for(std::size_t i = 0; i < out_->size(); ++i)
                    m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                        std::sqrt(wout[i]) * col[i] / std::sqrt(win[j]);
            }
            return m;
        }

        DenseVector<Real> singular_values() const { return gncoder::singular_values(dense()); }

        double condition_number() const
        {
            const DenseVector<Real> sv = singular_values();
            return sv(sv.size() - 1) > 0 ? static_cast<double>(sv(0) / sv(sv.size() - 1))
                                         : std::numeric_limits<double>::infinity();
        }

    private:
        std::string descriptor_;
        GridPtr in_;
        GridPtr out_;
        Map apply_;
        Map adjoint_;
        bool injective_;
    };

    using LinearOperator = BasicLinearOperator<double>;

    template<typename Real>
    BasicLinearOperator<Real> make_identity(const BasicGridPtr<Real> &g)
    {
        auto id = [](const BasicGridFunction<Real> &u) { return u; };
        return BasicLinearOperator<Real>("identity", g, g, id, id, true);
    }

    /// (F u)(x_k) = sum_{j <= k} w_j u_j, the discrete Volterra operator
    /// u -> int_0^x u. The adjoint is the reversed cumulative sum.
    template<typename Real>
    BasicLinearOperator<Real> make_integration(const BasicGridPtr<Real> &g)
    {
        if(g->dim() != 1)
            throw UnsupportedDimensionError("volterra: only defined on 1-D grids, got dimension " +
                std::to_string(g->dim()));
        auto apply = [](const BasicGridFunction<Real> &u) {
            BasicGridFunction<Real> out(u.grid());
            const auto w = u.grid()->weights();
            Real acc = 0;
            for(std::size_t k = 0; k < u.size(); ++k)
            {
                acc += w[k] * u[k];
                out[k] = acc;
            }
            return out;
        };
        auto adjoint = [](const BasicGridFunction<Real> &v) {
            BasicGridFunction<Real> out(v.grid());
            const auto w = v.grid()->weights();
            Real acc = 0;
            for(std::size_t k = v.size(); k-- > 0;)
            {
                acc += w[k] * v[k];
                out[k] = acc;
            }
            return out;
        };
        return BasicLinearOperator<Real>("volterra", g, g, apply, adjoint, true);
    }

    namespace detail
    {
        /// m x m reflective blur matrix for a normalized discrete Gaussian.
        /// Half-sample reflection at both ends keeps it symmetric with unit
        /// row sums.
        template<typename Real>
        DenseMatrix<Real> reflective_gauss_matrix(std::size_t m, double width)
        {
            const Real h = Real(1) / static_cast<Real>(m);
            const Real wd = static_cast<Real>(width);
            const auto period = static_cast<long>(2 * m);
            const long radius = std::min(static_cast<long>(std::ceil(8.0 * width * static_cast<double>(m))),
                4 * static_cast<long>(m));

            std::vector<Real> kernel(static_cast<std::size_t>(2 * radius + 1));
            Real mass = 0;
            for(long d = -radius; d <= radius; ++d)
            {
                const Real x = static_cast<Real>(d) * h;
                kernel[static_cast<std::size_t>(d + radius)] = std::exp(-x * x / (2 * wd * wd));
                mass += kernel[static_cast<std::size_t>(d + radius)];
            }
            for(Real &k : kernel)
                k /= mass;

            auto reflect = [&](long i) {
                long j = ((i % period) + period) % period;
                return j >= static_cast<long>(m) ? period - 1 - j : j;
            };

            DenseMatrix<Real> a = DenseMatrix<Real>::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
            for(long i = 0; i < static_cast<long>(m); ++i)
                for(long d = -radius; d <= radius; ++d)
                    a(i, reflect(i + d)) += kernel[static_cast<std::size_t>(d + radius)];
            return Real(0.5) * (a + a.transpose());
        }
    }

    /// Gaussian blur of standard deviation `kernel_width` (in units of the
    /// domain) with reflective boundaries; self-adjoint, mass preserving.
    template<typename Real>
    BasicLinearOperator<Real> make_convolution(const BasicGridPtr<Real> &g, double kernel_width)
    {
        if(!(kernel_width > 0.0) || !std::isfinite(kernel_width))
            throw RangeError("gauss: kernel width must be positive");
        if(g->dim() > 2)
            throw UnsupportedDimensionError("gauss: only 1-D and 2-D grids are supported, got dimension " +
                std::to_string(g->dim()));

        const std::size_t m = g->points_per_axis();
        const DenseMatrix<Real> k = detail::reflective_gauss_matrix<Real>(m, kernel_width);
        const std::size_t dim = g->dim();

        using RowMajor = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        using Col = DenseVector<Real>;
        auto apply = [k, m, dim](const BasicGridFunction<Real> &u) {
            BasicGridFunction<Real> out(u.grid());
            if(dim == 1)
            {
                const Eigen::Map<const Col> x(u.values().data(), static_cast<Eigen::Index>(m));
                Eigen::Map<Col>(out.values().data(), static_cast<Eigen::Index>(m)) = k * x;
                return out;
            }
            // node index = i * m + j, i along the first axis
            const auto mi = static_cast<Eigen::Index>(m);
            const Eigen::Map<const RowMajor> x(u.values().data(), mi, mi);
            Eigen::Map<RowMajor>(out.values().data(), mi, mi) = k * x * k.transpose();
            return out;
        };

        std::ostringstream name;
        name.precision(17);
        name << "gauss:" << kernel_width;
        return BasicLinearOperator<Real>(name.str(), g, g, apply, apply, true);
    }

    /// Builds an operator from a config descriptor: identity, volterra, gauss:<width>.
    template<typename Real>
    BasicLinearOperator<Real> make_operator(std::string_view descriptor, const BasicGridPtr<Real> &g)
    {
        if(descriptor == "identity")
            return make_identity(g);
        if(descriptor == "volterra")
            return make_integration(g);
        constexpr std::string_view prefix = "gauss:";
        if(descriptor.substr(0, prefix.size()) == prefix)
        {
            const std::string rest(descriptor.substr(prefix.size()));
            std::size_t used = 0;
            double width = 0.0;
            try
            {
                width = std::stod(rest, &used);
            }
            catch(const std::exception &)
            {
                used = 0;
            }
            if(used == 0 || used != rest.size())
                throw ConfigError("operator: cannot parse width in '" + std::string(descriptor) + "'");
            return make_convolution(g, width);
        }
        throw ConfigError("operator: unknown descriptor '" + std::string(descriptor) + "'");
    }

    template<typename Real>
    std::vector<BasicGridFunction<Real>> apply_all(const BasicLinearOperator<Real> &f,
        std::span<const BasicGridFunction<Real>> columns)
    {
        std::vector<BasicGridFunction<Real>> out;
        out.reserve(columns.size());
        for(const auto &c : columns)
            out.push_back(f.apply(c));
        return out;
    }

    template<typename Real>
    std::vector<BasicGridFunction<Real>> apply_all(const BasicLinearOperator<Real> &f,
        const std::vector<BasicGridFunction<Real>> &columns)
    {
        return apply_all(f, std::span<const BasicGridFunction<Real>>(columns));
    }
}
