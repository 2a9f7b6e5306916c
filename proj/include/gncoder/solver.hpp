/// gncoder/solver.hpp
///
/// Gauss-Newton iteration for N(p) = F Psi(p) = y,
///
///     p_{k+1} = p_k - N'(p_k)^+ (N(p_k) - y),
///
/// where N'(p)^+ is applied through a weighted QR of the columns
/// F (d Psi / d p_i). Gradient descent and the two Tikhonov functionals are
/// provided as baselines.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gncoder/activations.hpp"
#include "gncoder/errors.hpp"
#include "gncoder/forward_ops.hpp"
#include "gncoder/function_space.hpp"
#include "gncoder/linalg.hpp"
#include "gncoder/network.hpp"

namespace gncoder
{
    enum class SolveMode
    {
        GaussNewton,
        GradientDescent
    };

    enum class SolveStatus
    {
        ConvergedResidual,
        ConvergedStep,
        MaxIters,
        RankDeficient,
        NumericError
    };

    inline const char *to_string(SolveStatus s)
    {
        switch(s)
        {
        case SolveStatus::ConvergedResidual: return "converged_residual";
        case SolveStatus::ConvergedStep: return "converged_step";
        case SolveStatus::MaxIters: return "max_iters";
        case SolveStatus::RankDeficient: return "rank_deficient";
        case SolveStatus::NumericError: break;
        }
        return "numeric_error";
    }

    inline const char *to_string(SolveMode m)
    {
        return m == SolveMode::GaussNewton ? "gauss_newton" : "gradient_descent";
    }

    template<typename Real>
    struct BasicSolveConfig
    {
        Activation activation = Activation::sigmoid(1.0);
        BasicGridPtr<Real> grid;
        std::string forward_operator = "identity";
        BasicParams<Real> initial;
        BasicGridFunction<Real> data;
        /// Exact solution when known; enables parameter errors in the trace.
        std::optional<BasicParams<Real>> truth;
        std::size_t max_iters = 50;
        double tol_residual = 1e-12;
        double tol_step = 1e-14;
        double rank_tol = default_rank_tol;
        SolveMode mode = SolveMode::GaussNewton;
        double step_size = 1e-2;
        std::uint64_t seed = 0;
        double param_box = default_param_box;

        void validate() const
        {
            if(!grid)
                throw ConfigError("solve: no grid configured");
            if(initial.n_star() == 0)
                throw ConfigError("solve: no initial parameters");
            if(initial.dim() != grid->dim())
                throw ConfigError("solve: parameter dimension does not match the grid");
            if(data.size() == 0 || !(*data.grid() == *grid))
                throw ConfigError("solve: data is not on the configured grid");
            if(truth && !truth->same_shape(initial))
                throw ConfigError("solve: truth and initial parameters have different shapes");
            if(max_iters < 1)
                throw ConfigError("solve: max_iters must be at least 1");
            if(!(tol_residual > 0.0) || !(tol_step > 0.0) || !(rank_tol > 0.0))
                throw ConfigError("solve: tolerances must be positive");
            if(mode == SolveMode::GradientDescent && !(step_size > 0.0))
                throw ConfigError("solve: step_size must be positive");
            if(!activation.has_d2())
                throw ConfigError("solve: activation '" + activation.to_string() +
                    "' is not twice differentiable; the solver needs a C2 activation");
        }
    };

    using SolveConfig = BasicSolveConfig<double>;

    /// Everything a single step needs: N = F o Psi, the data and tolerances.
    template<typename Real>
    struct BasicProblem
    {
        using GridFunction = BasicGridFunction<Real>;
        using Params = BasicParams<Real>;

        Activation activation;
        BasicGridPtr<Real> grid;
        BasicLinearOperator<Real> forward;
        GridFunction data;
        double rank_tol = default_rank_tol;
        double param_box = default_param_box;

        static BasicProblem from_config(const BasicSolveConfig<Real> &cfg)
        {
            return BasicProblem{cfg.activation, cfg.grid, make_operator(cfg.forward_operator, cfg.grid), cfg.data,
                cfg.rank_tol, cfg.param_box};
        }

        GridFunction forward_value(const Params &p) const { return forward.apply(eval_psi(p, activation, grid)); }
        GridFunction residual(const Params &p) const { return forward_value(p) - data; }

        /// Columns of N'(p) = F Psi'(p).
        std::vector<GridFunction> forward_jacobian(const Params &p) const
        {
            return apply_all(forward, jacobian(p, activation, grid).columns);
        }
    };

    using Problem = BasicProblem<double>;

    template<typename Real>
    struct BasicStepResult
    {
        BasicParams<Real> next;
        double residual_norm = 0.0;
        double step_norm = 0.0;
        std::size_t rank = 0;
        std::size_t deficit = 0;
        bool rank_deficient = false;
    };

    using StepResult = BasicStepResult<double>;

    namespace detail
    {
        template<typename Real>
        void require_finite(std::span<const Real> v, const char *what)
        {
            for(Real x : v)
                if(!std::isfinite(x))
                    throw NumericError(std::string(what) + ": non-finite value encountered");
        }

        template<typename Real>
        void require_finite(const Vec<Real> &v, const char *what)
        {
            require_finite(std::span<const Real>(v), what);
        }
    }

    /// One Gauss-Newton step from p. On rank deficiency `next` is p and the
    /// deficit is reported.
    template<typename Real>
    BasicStepResult<Real> gauss_newton_step(const BasicParams<Real> &p, const BasicProblem<Real> &prob)
    {
        const BasicGridFunction<Real> r = prob.residual(p);
        detail::require_finite(r.values(), "gauss_newton_step residual");

        BasicStepResult<Real> out{p, static_cast<double>(norm(r)), 0.0, 0, 0, false};
        const auto cols = prob.forward_jacobian(p);
        const BasicQRFactors<Real> f = weighted_qr(cols, prob.rank_tol);
        out.rank = f.rank;
        if(!f.full_rank())
        {
            out.rank_deficient = true;
            out.deficit = f.deficit();
            return out;
        }
        const Vec<Real> step = pinv_apply(f, r, PinvMode::Strict);
        detail::require_finite(step, "gauss_newton_step");
        out.next = offset(p, step, Real(-1));
        out.step_norm = static_cast<double>(euclidean_norm(step));
        return out;
    }

    /// grad_p 1/2 ||F Psi(p) - y||^2 = Psi'(p)^T F^* (F Psi(p) - y)
    template<typename Real>
    Vec<Real> misfit_gradient(const BasicParams<Real> &p, const BasicProblem<Real> &prob)
    {
        const BasicGridFunction<Real> back = prob.forward.adjoint(prob.residual(p));
        const BasicJacobian<Real> jac = jacobian(p, prob.activation, prob.grid);
        Vec<Real> g(p.n_star());
        for(std::size_t i = 0; i < g.size(); ++i)
            g[i] = inner_product(jac.columns[i], back);
        return g;
    }

    template<typename Real>
    BasicParams<Real> gradient_step(const BasicParams<Real> &p, const BasicProblem<Real> &prob, double step_size)
    {
        if(!(step_size > 0.0))
            throw RangeError("gradient_step: step_size must be positive");
        const Vec<Real> g = misfit_gradient(p, prob);
        detail::require_finite(g, "gradient_step");
        return offset(p, g, static_cast<Real>(-step_size));
    }

    struct IterationRecord
    {
        std::size_t iter = 0;
        /// ||N(p_k) - y||
        double residual = 0.0;
        /// ||p_{k+1} - p_k||, 0 on the terminal record
        double step_norm = 0.0;
        /// ||p_k - p_true||, NaN when the truth is unknown
        double param_error = std::numeric_limits<double>::quiet_NaN();
        std::size_t rank = 0;
        double elapsed_seconds = 0.0;
    };

    template<typename Real>
    class BasicIterationTrace
    {
    public:
        std::vector<IterationRecord> records;
        BasicParams<Real> final_params;
        std::size_t deficit = 0;
        std::size_t boundary_events = 0;
        std::string message;

        bool has_status() const noexcept { return status_.has_value(); }

        SolveStatus status() const
        {
            if(!status_)
                throw Error("IterationTrace: status not set");
            return *status_;
        }

        void set_status(SolveStatus s)
        {
            if(status_)
                throw Error("IterationTrace: status already set");
            status_ = s;
        }

        std::size_t iterations() const noexcept { return records.empty() ? 0 : records.back().iter; }

        std::vector<double> param_errors() const
        {
            std::vector<double> e;
            e.reserve(records.size());
            for(const auto &r : records)
                e.push_back(r.param_error);
            return e;
        }

    private:
        std::optional<SolveStatus> status_;
    };

    using IterationTrace = BasicIterationTrace<double>;

    /// Runs the configured iteration. Rank deficiency, non-finite values and
    /// iteration limits end the run with a status; they never throw.
    template<typename Real>
    BasicIterationTrace<Real> solve(const BasicSolveConfig<Real> &cfg)
    {
        cfg.validate();
        const auto prob = BasicProblem<Real>::from_config(cfg);
        const auto start = std::chrono::steady_clock::now();
        auto elapsed = [&] {
            return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        };

        BasicIterationTrace<Real> trace;
        BasicParams<Real> p = cfg.initial;
        bool stop_next = false;
        for(std::size_t k = 0;; ++k)
        {
            IterationRecord rec;
            rec.iter = k;
            if(cfg.truth)
                rec.param_error = static_cast<double>(distance(p, *cfg.truth));

            try
            {
                const BasicGridFunction<Real> r = prob.residual(p);
                rec.residual = static_cast<double>(norm(r));
                if(!std::isfinite(rec.residual))
                    throw NumericError("residual is not finite");

                const auto cols = prob.forward_jacobian(p);
                const BasicQRFactors<Real> f = weighted_qr(cols, prob.rank_tol);
                rec.rank = f.rank;

                if(rec.residual <= cfg.tol_residual)
                    trace.set_status(SolveStatus::ConvergedResidual);
                else if(stop_next)
                    trace.set_status(SolveStatus::ConvergedStep);
                else if(cfg.mode == SolveMode::GaussNewton && !f.full_rank())
                {
                    trace.deficit = f.deficit();
                    trace.set_status(SolveStatus::RankDeficient);
                }
                else if(k >= cfg.max_iters)
                    trace.set_status(SolveStatus::MaxIters);

                if(!trace.has_status())
                {
                    Vec<Real> step;
                    if(cfg.mode == SolveMode::GaussNewton)
                        step = pinv_apply(f, r, PinvMode::Strict);
                    else
                    {
                        step = misfit_gradient(p, prob);
                        for(Real &v : step)
                            v *= static_cast<Real>(cfg.step_size);
                    }
                    detail::require_finite(step, "solve");
                    rec.step_norm = static_cast<double>(euclidean_norm(step));
                    p = offset(p, step, Real(-1));

                    bool clamped = false;
                    const Real box = static_cast<Real>(cfg.param_box);
                    for(Real &v : p.flat())
                    {
                        if(std::abs(v) > box)
                        {
                            v = std::copysign(box, v);
                            clamped = true;
                        }
                    }
                    if(clamped)
                        ++trace.boundary_events;
                    stop_next = rec.step_norm <= cfg.tol_step;
                }
            }
            catch(const Error &e)
            {
                trace.message = e.what();
                if(!trace.has_status())
                    trace.set_status(SolveStatus::NumericError);
            }

            rec.elapsed_seconds = elapsed();
            trace.records.push_back(rec);
            if(trace.has_status())
                break;
        }
        trace.final_params = p;
        return trace;
    }

    enum class TikhonovVariant
    {
        StateSpace,
        ParameterSpace
    };

    template<typename Real>
    struct BasicTikhonovObjective
    {
        double lambda = 0.0;
        TikhonovVariant variant = TikhonovVariant::StateSpace;
        /// Image-space prior x~ (state space variant).
        BasicGridFunction<Real> prior;
        /// Penalty weights rho_i of sum rho_i p_i^2 (parameter space variant).
        Vec<Real> penalty_weights;
    };

    using TikhonovObjective = BasicTikhonovObjective<double>;

    /// Value and gradient of
    ///   state space:     ||F Psi(p) - y||^2 + lambda ||Psi(p) - x~||^2
    ///   parameter space: ||F Psi(p) - y||^2 + lambda sum rho_i p_i^2
    template<typename Real>
    std::pair<Real, Vec<Real>> tikhonov_value_grad(const BasicTikhonovObjective<Real> &obj,
        const BasicParams<Real> &p, const BasicProblem<Real> &prob)
    {
        using GridFunction = BasicGridFunction<Real>;
        const Real lambda = static_cast<Real>(obj.lambda);
        if(!(obj.lambda >= 0.0))
            throw RangeError("tikhonov: lambda must be nonnegative");

        const GridFunction psi = eval_psi(p, prob.activation, prob.grid);
        const GridFunction r = prob.forward.apply(psi) - prob.data;
        Real value = inner_product(r, r);
        GridFunction back = prob.forward.adjoint(r);
        Vec<Real> extra(p.n_star(), Real(0));

        if(obj.variant == TikhonovVariant::StateSpace)
        {
            if(obj.prior.size() == 0)
                throw ShapeError("tikhonov: state space variant needs a prior");
            psi.require_compatible(obj.prior, "tikhonov");
            const GridFunction dev = psi - obj.prior;
            value += lambda * inner_product(dev, dev);
            back.axpy(lambda, dev);
        }
        else
        {
            if(obj.penalty_weights.size() != p.n_star())
                throw ShapeError("tikhonov: penalty weights must have length " + std::to_string(p.n_star()));
            for(std::size_t i = 0; i < p.n_star(); ++i)
            {
                const Real pi = p.flat()[i];
                value += lambda * obj.penalty_weights[i] * pi * pi;
                extra[i] = 2 * lambda * obj.penalty_weights[i] * pi;
            }
        }

        const BasicJacobian<Real> jac = jacobian(p, prob.activation, prob.grid);
        Vec<Real> grad(p.n_star());
        for(std::size_t i = 0; i < grad.size(); ++i)
            grad[i] = 2 * inner_product(jac.columns[i], back) + extra[i];
        return {value, grad};
    }

    struct RadiusCheck
    {
        double h = 0.0;
        bool satisfied = false;
    };

    /// h = rho * C_I * C_L / 2, satisfied iff h < 1.
    inline RadiusCheck radius_check(const ConvergenceConstants &c)
    {
        if(c.rho < 0.0 || c.c_i < 0.0 || c.c_l < 0.0)
            throw RangeError("radius_check: constants must be nonnegative");
        const double h = c.rho * c.c_i * c.c_l / 2.0;
        return {h, h < 1.0};
    }

    /// Least-squares slope of log e_{k+1} against log e_k over the longest run
    /// of consecutive errors strictly inside (1e-14, 1e-1).
    inline double convergence_order(std::span<const double> errors)
    {
        constexpr double lo = 1e-14;
        constexpr double hi = 1e-1;
        std::size_t best_begin = 0, best_len = 0;
        for(std::size_t i = 0; i < errors.size();)
        {
            if(!(errors[i] > lo && errors[i] < hi))
            {
                ++i;
                continue;
            }
            std::size_t j = i;
            while(j < errors.size() && errors[j] > lo && errors[j] < hi)
                ++j;
            if(j - i > best_len)
            {
                best_begin = i;
                best_len = j - i;
            }
            i = j;
        }
        if(best_len < 3)
            throw InsufficientDataError("convergence_order: need at least 3 consecutive errors in (1e-14, 1e-1), found " +
                std::to_string(best_len));

        double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
        const double n = static_cast<double>(best_len - 1);
        for(std::size_t i = best_begin; i + 1 < best_begin + best_len; ++i)
        {
            const double x = std::log(errors[i]);
            const double y = std::log(errors[i + 1]);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double denom = n * sxx - sx * sx;
        if(denom == 0.0)
            throw InsufficientDataError("convergence_order: errors do not vary");
        return (n * sxy - sx * sy) / denom;
    }

    template<typename Real>
    double convergence_order(const BasicIterationTrace<Real> &trace)
    {
        const auto e = trace.param_errors();
        return convergence_order(e);
    }
}
