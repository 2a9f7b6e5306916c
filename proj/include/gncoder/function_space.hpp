/// gncoder/function_space.hpp
///
/// Midpoint-rule discretization of L2([0,1]^n). A grid holds the tensor nodes
/// and quadrature weights, a grid function holds one value per node. All inner
/// products in the library are the weighted sums defined here.
///
/// Every numeric type is templated on the scalar `Real`; the unprefixed
/// aliases (Grid, GridFunction, ...) are the double instantiations.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gncoder/errors.hpp"

namespace gncoder
{
    inline constexpr double max_grid_nodes = 1e8;

    template<typename Real>
    class BasicGrid
    {
    public:
        using scalar_type = Real;

        /// Tensor midpoint grid with nodes (i + 0.5) / m on each axis, ordered
        /// lexicographically (first axis slowest), uniform weights m^-n.
        BasicGrid(std::size_t dim, std::size_t points_per_axis)
            : dim_(dim), m_(points_per_axis)
        {
            if(dim < 1)
                throw SizeError("make_grid: dimension must be at least 1");
            if(points_per_axis < 2)
                throw SizeError("make_grid: need at least 2 points per axis, got " +
                    std::to_string(points_per_axis));
            const double count = std::pow(static_cast<double>(points_per_axis), static_cast<double>(dim));
            if(count > max_grid_nodes)
                throw SizeError("make_grid: " + std::to_string(points_per_axis) + "^" +
                    std::to_string(dim) + " nodes exceeds the 1e8 node cap");

            const auto total = static_cast<std::size_t>(count);
            const Real m = static_cast<Real>(points_per_axis);
            nodes_.resize(total * dim);
            weights_.assign(total, Real(1) / static_cast<Real>(total));

            std::vector<std::size_t> idx(dim, 0);
            for(std::size_t k = 0; k < total; ++k)
            {
                for(std::size_t a = 0; a < dim; ++a)
                    nodes_[k * dim + a] = (static_cast<Real>(idx[a]) + Real(0.5)) / m;
                // odometer increment, last axis fastest
                for(std::size_t a = dim; a-- > 0;)
                {
                    if(++idx[a] < points_per_axis)
                        break;
                    idx[a] = 0;
                }
            }
        }

        std::size_t dim() const noexcept { return dim_; }
        std::size_t points_per_axis() const noexcept { return m_; }
        std::size_t size() const noexcept { return weights_.size(); }

        /// Coordinates of node k (dim entries).
        std::span<const Real> node(std::size_t k) const
        {
            return {nodes_.data() + k * dim_, dim_};
        }

        Real coord(std::size_t k, std::size_t axis) const { return nodes_[k * dim_ + axis]; }

        std::span<const Real> weights() const noexcept { return weights_; }

        Real spacing() const noexcept { return Real(1) / static_cast<Real>(m_); }

        /// Grids are fully determined by (dim, m), so structural equality is identity.
        bool operator==(const BasicGrid &other) const noexcept
        {
            return dim_ == other.dim_ && m_ == other.m_;
        }

    private:
        std::size_t dim_;
        std::size_t m_;
        std::vector<Real> nodes_;
        std::vector<Real> weights_;
    };

    template<typename Real>
    using BasicGridPtr = std::shared_ptr<const BasicGrid<Real>>;

    template<typename Real = double>
    BasicGridPtr<Real> make_grid(std::size_t dim, std::size_t points_per_axis)
    {
        return std::make_shared<const BasicGrid<Real>>(dim, points_per_axis);
    }

    template<typename Real>
    class BasicGridFunction
    {
    public:
        using scalar_type = Real;

        BasicGridFunction() = default;

        explicit BasicGridFunction(BasicGridPtr<Real> grid, Real fill = Real(0))
            : grid_(std::move(grid)), values_(grid_->size(), fill)
        { }

        BasicGridFunction(BasicGridPtr<Real> grid, std::vector<Real> values)
            : grid_(std::move(grid)), values_(std::move(values))
        {
            if(values_.size() != grid_->size())
                throw IncompatibleError("GridFunction: " + std::to_string(values_.size()) +
                    " values for a grid of " + std::to_string(grid_->size()) + " nodes");
        }

        /// Samples f(x) at every node, f taking std::span<const Real>.
        template<typename Fn>
        static BasicGridFunction sample(const BasicGridPtr<Real> &grid, Fn &&f)
        {
            BasicGridFunction out(grid);
            for(std::size_t k = 0; k < grid->size(); ++k)
                out.values_[k] = f(grid->node(k));
            return out;
        }

        const BasicGridPtr<Real> &grid() const noexcept { return grid_; }
        std::size_t size() const noexcept { return values_.size(); }

        Real operator[](std::size_t k) const { return values_[k]; }
        Real &operator[](std::size_t k) { return values_[k]; }

        std::span<const Real> values() const noexcept { return values_; }
        std::span<Real> values() noexcept { return values_; }

        bool compatible(const BasicGridFunction &other) const noexcept
        {
            return grid_ && other.grid_ && (grid_ == other.grid_ || *grid_ == *other.grid_);
        }

        void require_compatible(const BasicGridFunction &other, const char *where) const
        {
            if(!compatible(other))
                throw IncompatibleError(std::string(where) + ": grid functions live on different grids");
        }

        /// this += a * x
        BasicGridFunction &axpy(Real a, const BasicGridFunction &x)
        {
            require_compatible(x, "axpy");
            for(std::size_t k = 0; k < values_.size(); ++k)
                values_[k] += a * x.values_[k];
            return *this;
        }

        BasicGridFunction &operator+=(const BasicGridFunction &x) { return axpy(Real(1), x); }
        BasicGridFunction &operator-=(const BasicGridFunction &x) { return axpy(Real(-1), x); }

        BasicGridFunction &operator*=(Real a)
        {
            for(Real &v : values_)
                v *= a;
            return *this;
        }

        friend BasicGridFunction operator+(BasicGridFunction a, const BasicGridFunction &b) { return a += b; }
        friend BasicGridFunction operator-(BasicGridFunction a, const BasicGridFunction &b) { return a -= b; }
        friend BasicGridFunction operator*(Real s, BasicGridFunction a) { return a *= s; }

        bool all_finite() const noexcept
        {
            for(Real v : values_)
                if(!std::isfinite(v))
                    return false;
            return true;
        }

    private:
        BasicGridPtr<Real> grid_;
        std::vector<Real> values_;
    };

    /// Weighted quadrature pairing sum_k w_k u_k v_k, summed in node order.
    template<typename Real>
    Real inner_product(const BasicGridFunction<Real> &u, const BasicGridFunction<Real> &v)
    {
        u.require_compatible(v, "inner_product");
        const auto w = u.grid()->weights();
        Real acc = 0;
        for(std::size_t k = 0; k < w.size(); ++k)
            acc += w[k] * u[k] * v[k];
        return acc;
    }

    template<typename Real>
    Real norm(const BasicGridFunction<Real> &u)
    {
        // scaled so tiny or huge entries neither underflow nor overflow
        Real scale = 0;
        for(Real v : u.values())
            scale = std::max(scale, std::abs(v));
        if(scale == 0 || !std::isfinite(scale))
            return scale == 0 ? Real(0) : std::sqrt(inner_product(u, u));
        const auto w = u.grid()->weights();
        Real acc = 0;
        for(std::size_t k = 0; k < w.size(); ++k)
        {
            const Real v = u[k] / scale;
            acc += w[k] * v * v;
        }
        return scale * std::sqrt(acc);
    }

    /// CSV with header index,x1,...,xn,value in lexicographic node order.
    template<typename Real>
    void write_csv(std::ostream &os, const BasicGridFunction<Real> &u)
    {
        const auto &g = *u.grid();
        os << "index";
        for(std::size_t a = 0; a < g.dim(); ++a)
            os << ",x" << (a + 1);
        os << ",value\n";
        os << std::setprecision(std::numeric_limits<Real>::max_digits10);
        for(std::size_t k = 0; k < g.size(); ++k)
        {
            os << k;
            for(Real c : g.node(k))
                os << ',' << c;
            os << ',' << u[k] << '\n';
        }
    }

    using Grid = BasicGrid<double>;
    using GridPtr = BasicGridPtr<double>;
    using GridFunction = BasicGridFunction<double>;
}
