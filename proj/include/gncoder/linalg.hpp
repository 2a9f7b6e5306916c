/// gncoder/linalg.hpp
///
/// Moore-Penrose machinery for function-valued column matrices
/// E = (e_1, ..., e_k), e_i in L2([0,1]^n).
///
/// weighted_qr orthonormalizes the columns in the quadrature inner product
/// (modified Gram-Schmidt with one reorthogonalization pass). The factors give
/// the orthogonal projection onto span(E) and the pseudoinverse
/// E^+ x = R^-1 Q^T x by back-substitution. Dense helpers built on Eigen are
/// provided for singular values and spectral norms.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gncoder/errors.hpp"
#include "gncoder/function_space.hpp"

namespace gncoder
{
    template<typename Real>
    using Vec = std::vector<Real>;

    template<typename Real>
    using DenseMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;

    template<typename Real>
    using DenseVector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

    using Coeffs = Vec<double>;

    inline constexpr double default_rank_tol = 1e-10;

    template<typename Real>
    struct BasicQRFactors
    {
        /// Orthonormal columns, one per retained input column.
        std::vector<BasicGridFunction<Real>> q_columns;
        /// rank x cols; row i has zeros left of pivots[i].
        DenseMatrix<Real> r_matrix;
        /// Input column index that introduced q_columns[i].
        std::vector<std::size_t> pivots;
        /// Per input column: excluded as numerically dependent.
        std::vector<bool> dependent;
        std::size_t rank = 0;
        std::size_t cols = 0;
        double rank_tol = default_rank_tol;

        bool full_rank() const noexcept { return rank == cols; }
        std::size_t deficit() const noexcept { return cols - rank; }
    };

    using QRFactors = BasicQRFactors<double>;

    /// Estimated constants of the local convergence theory.
    struct ConvergenceConstants
    {
        /// Bound on the derivative, max ||Psi'(q)|| over the sampled ball.
        double c_i = 0.0;
        /// Lipschitz bound of the derivative.
        double c_l = 0.0;
        /// Bound on the pseudoinverse, max ||Psi'(q)^+|| over the sampled ball.
        double c_i_pinv = 0.0;
        /// Tangential cone constant (0 when not estimated).
        double c_t = 0.0;
        /// ||p_true - p_0||
        double rho = 0.0;
        /// rho * C_I * C_L / 2
        double h = 0.0;
        std::size_t samples = 0;
        std::size_t pairs = 0;
        bool insufficient_samples = false;
    };

    namespace detail
    {
        template<typename Real>
        void require_same_grid(std::span<const BasicGridFunction<Real>> columns, const char *where)
        {
            if(columns.empty())
                throw ShapeError(std::string(where) + ": empty column list");
            for(const auto &c : columns)
                columns.front().require_compatible(c, where);
        }

        inline Eigen::Index ix(std::size_t i) { return static_cast<Eigen::Index>(i); }
    }

    template<typename Real>
    Real euclidean_norm(std::span<const Real> v)
    {
        Real acc = 0;
        for(Real x : v)
            acc += x * x;
        return std::sqrt(acc);
    }

    template<typename Real>
    Real euclidean_norm(const Vec<Real> &v)
    {
        return euclidean_norm(std::span<const Real>(v));
    }

    /// Linear combination sum_k c_k * columns[k].
    template<typename Real>
    BasicGridFunction<Real> combine(std::span<const BasicGridFunction<Real>> columns, std::span<const Real> c)
    {
        detail::require_same_grid(columns, "combine");
        if(c.size() != columns.size())
            throw ShapeError("combine: " + std::to_string(c.size()) + " coefficients for " +
                std::to_string(columns.size()) + " columns");
        BasicGridFunction<Real> out(columns.front().grid());
        for(std::size_t k = 0; k < columns.size(); ++k)
            out.axpy(c[k], columns[k]);
        return out;
    }

    template<typename Real>
    BasicGridFunction<Real> combine(const std::vector<BasicGridFunction<Real>> &columns, const Vec<Real> &c)
    {
        return combine(std::span<const BasicGridFunction<Real>>(columns), std::span<const Real>(c));
    }

    template<typename Real>
    BasicQRFactors<Real> weighted_qr(std::span<const BasicGridFunction<Real>> columns,
        double rank_tol = default_rank_tol)
    {
        detail::require_same_grid(columns, "weighted_qr");
        if(!(rank_tol > 0.0))
            throw RangeError("weighted_qr: rank_tol must be positive");

        const std::size_t cols = columns.size();
        Real max_norm = 0;
        for(const auto &c : columns)
            max_norm = std::max(max_norm, norm(c));

        BasicQRFactors<Real> f;
        f.cols = cols;
        f.rank_tol = rank_tol;
        f.dependent.assign(cols, false);
        f.r_matrix = DenseMatrix<Real>::Zero(detail::ix(cols), detail::ix(cols));
        if(max_norm == 0 || !std::isfinite(max_norm))
            throw ZeroMatrixError("weighted_qr: all columns are zero or non-finite");

        const Real threshold = static_cast<Real>(rank_tol) * max_norm;
        for(std::size_t k = 0; k < cols; ++k)
        {
            BasicGridFunction<Real> v = columns[k];
            for(int pass = 0; pass < 2; ++pass)
            {
                for(std::size_t i = 0; i < f.rank; ++i)
                {
                    const Real c = inner_product(f.q_columns[i], v);
                    v.axpy(-c, f.q_columns[i]);
                    f.r_matrix(detail::ix(i), detail::ix(k)) += c;
                }
            }
            const Real nrm = norm(v);
            if(nrm <= threshold)
            {
                f.dependent[k] = true;
                continue;
            }
            v *= Real(1) / nrm;
            f.r_matrix(detail::ix(f.rank), detail::ix(k)) = nrm;
            f.q_columns.push_back(std::move(v));
            f.pivots.push_back(k);
            ++f.rank;
        }
        if(f.rank == 0)
            throw ZeroMatrixError("weighted_qr: every column is below the rank tolerance");
        f.r_matrix.conservativeResize(detail::ix(f.rank), Eigen::NoChange);
        return f;
    }

    template<typename Real>
    BasicQRFactors<Real> weighted_qr(const std::vector<BasicGridFunction<Real>> &columns,
        double rank_tol = default_rank_tol)
    {
        return weighted_qr(std::span<const BasicGridFunction<Real>>(columns), rank_tol);
    }

    /// Orthogonal projection onto the span of the factored columns.
    template<typename Real>
    BasicGridFunction<Real> project(const BasicQRFactors<Real> &f, const BasicGridFunction<Real> &x)
    {
        f.q_columns.front().require_compatible(x, "project");
        BasicGridFunction<Real> out(x.grid());
        for(const auto &q : f.q_columns)
            out.axpy(inner_product(q, x), q);
        return out;
    }

    enum class PinvMode
    {
        /// Rank-deficient factors give zeros in the excluded positions.
        MinimumNorm,
        /// Rank-deficient factors raise RankError.
        Strict
    };

    /// Pseudoinverse application E^+ x.
    template<typename Real>
    Vec<Real> pinv_apply(const BasicQRFactors<Real> &f, const BasicGridFunction<Real> &x,
        PinvMode mode = PinvMode::MinimumNorm)
    {
        f.q_columns.front().require_compatible(x, "pinv_apply");
        if(mode == PinvMode::Strict && !f.full_rank())
            throw RankError("pinv_apply: column matrix is rank deficient by " +
                std::to_string(f.deficit()), f.deficit());

        const std::size_t r = f.rank;
        Vec<Real> b(r);
        for(std::size_t i = 0; i < r; ++i)
            b[i] = inner_product(f.q_columns[i], x);

        // R restricted to the pivot columns is upper triangular.
        Vec<Real> c(f.cols, Real(0));
        for(std::size_t i = r; i-- > 0;)
        {
            Real acc = b[i];
            for(std::size_t j = i + 1; j < r; ++j)
                acc -= f.r_matrix(detail::ix(i), detail::ix(f.pivots[j])) * c[f.pivots[j]];
            c[f.pivots[i]] = acc / f.r_matrix(detail::ix(i), detail::ix(f.pivots[i]));
        }
        return c;
    }

    struct MPResiduals
    {
        double lbl = 0.0; ///< L B L = L
        double blb = 0.0; ///< B L B = B
        double bl = 0.0;  ///< B L = I on the coefficient space
        double lb = 0.0;  ///< L B = orthogonal projection onto span

        double max() const { return std::max({lbl, blb, bl, lb}); }
    };

    /// Residuals of the four Moore-Penrose identities for L = columns and
    /// B = pinv_apply(f, .), each the worst relative error over a fixed set
    /// of seeded random probes.
    template<typename Real>
    MPResiduals mp_residuals(std::span<const BasicGridFunction<Real>> columns, const BasicQRFactors<Real> &f,
        std::size_t probes = 20, std::uint64_t seed = 20220917)
    {
        detail::require_same_grid(columns, "mp_residuals");
        if(columns.size() != f.cols)
            throw ShapeError("mp_residuals: factors do not match the column count");

        using GF = BasicGridFunction<Real>;
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        const auto &grid = columns.front().grid();
        auto random_coeffs = [&]() {
            Vec<Real> q(columns.size());
            for(Real &v : q)
                v = static_cast<Real>(normal(rng));
            return q;
        };
        auto random_function = [&]() {
            GF x(grid);
            for(Real &v : x.values())
                v = static_cast<Real>(normal(rng));
            return x;
        };
        auto rel = [](Real err, Real scale) { return static_cast<double>(scale > 0 ? err / scale : err); };
        auto diff_norm = [](const Vec<Real> &a, const Vec<Real> &b) {
            Real acc = 0;
            for(std::size_t i = 0; i < a.size(); ++i)
                acc += (a[i] - b[i]) * (a[i] - b[i]);
            return std::sqrt(acc);
        };
        auto L = [&](const Vec<Real> &q) { return combine(columns, std::span<const Real>(q)); };

        MPResiduals res;
        for(std::size_t t = 0; t < probes; ++t)
        {
            {
                const Vec<Real> q = random_coeffs();
                const GF lq = L(q);
                const GF lblq = L(pinv_apply(f, lq));
                res.lbl = std::max(res.lbl, rel(norm(GF(lblq - lq)), norm(lq)));
            }
            {
                const GF x = random_function();
                const Vec<Real> bx = pinv_apply(f, x);
                const Vec<Real> blbx = pinv_apply(f, L(bx));
                res.blb = std::max(res.blb, rel(diff_norm(blbx, bx), euclidean_norm(bx)));
            }
            {
                const Vec<Real> q = random_coeffs();
                const Vec<Real> blq = pinv_apply(f, L(q));
                res.bl = std::max(res.bl, rel(diff_norm(blq, q), euclidean_norm(q)));
            }
            {
                const GF x = random_function();
                const GF lbx = L(pinv_apply(f, x));
                res.lb = std::max(res.lb, rel(norm(GF(lbx - project(f, x))), norm(x)));
            }
        }
        return res;
    }

    template<typename Real>
    MPResiduals mp_residuals(const std::vector<BasicGridFunction<Real>> &columns, const BasicQRFactors<Real> &f,
        std::size_t probes = 20, std::uint64_t seed = 20220917)
    {
        return mp_residuals(std::span<const BasicGridFunction<Real>>(columns), f, probes, seed);
    }

    /// Dense realization of the columns as a Euclidean matrix with rows scaled
    /// by sqrt(weight), so that its SVD is the L2 SVD of the column operator.
    template<typename Real>
    DenseMatrix<Real> weighted_matrix(std::span<const BasicGridFunction<Real>> columns)
    {
        detail::require_same_grid(columns, "weighted_matrix");
        const auto w = columns.front().grid()->weights();
        DenseMatrix<Real> m(detail::ix(w.size()), detail::ix(columns.size()));
        for(std::size_t j = 0; j < columns.size(); ++j)
            for(std::size_t k = 0; k < w.size(); ++k)
                m(detail::ix(k), detail::ix(j)) = std::sqrt(w[k]) * columns[j][k];
        return m;
    }

    template<typename Real>
    DenseMatrix<Real> weighted_matrix(const std::vector<BasicGridFunction<Real>> &columns)
    {
        return weighted_matrix(std::span<const BasicGridFunction<Real>>(columns));
    }

    /// Singular values in decreasing order.
    template<typename Derived>
    DenseVector<typename Derived::Scalar> singular_values(const Eigen::MatrixBase<Derived> &m)
    {
        using Real = typename Derived::Scalar;
        if(m.size() == 0)
            return {};
        Eigen::BDCSVD<DenseMatrix<Real>> svd(m);
        return svd.singularValues();
    }

    template<typename Derived>
    typename Derived::Scalar spectral_norm(const Eigen::MatrixBase<Derived> &m)
    {
        const auto sv = singular_values(m);
        return sv.size() ? sv(0) : typename Derived::Scalar(0);
    }

    /// Number of singular values above rel_tol * largest.
    template<typename Real>
    std::size_t numerical_rank(const DenseVector<Real> &sv, double rel_tol)
    {
        if(sv.size() == 0 || sv(0) == 0)
            return 0;
        std::size_t r = 0;
        for(Eigen::Index i = 0; i < sv.size(); ++i)
            if(sv(i) > static_cast<Real>(rel_tol) * sv(0))
                ++r;
        return r;
    }
}
