/// gncoder/activations.hpp
///
/// Scalar activation functions with analytic first and second derivatives.

#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <string_view>

#include "gncoder/errors.hpp"

namespace gncoder
{
    enum class ActivationKind
    {
        Sigmoid,
        Tanh,
        Relu,
        Step
    };

    enum class Smoothness
    {
        C2,
        PiecewiseC0,
        Discontinuous
    };

    class Activation
    {
    public:
        static Activation sigmoid(double epsilon = 1.0)
        {
            if(!(epsilon > 0.0) || !std::isfinite(epsilon))
                throw RangeError("sigmoid: epsilon must be a positive finite number");
            return Activation(ActivationKind::Sigmoid, epsilon);
        }
        static Activation tanh() { return Activation(ActivationKind::Tanh, 1.0); }
        static Activation relu() { return Activation(ActivationKind::Relu, 1.0); }
        static Activation step() { return Activation(ActivationKind::Step, 1.0); }

        /// Parses `sigmoid:<epsilon>`, `tanh`, `relu` or `step`.
        static Activation parse(std::string_view desc)
        {
            if(desc == "tanh")
                return tanh();
            if(desc == "relu")
                return relu();
            if(desc == "step")
                return step();
            if(desc == "sigmoid")
                return sigmoid(1.0);
            constexpr std::string_view prefix = "sigmoid:";
            if(desc.substr(0, prefix.size()) == prefix)
            {
                const std::string rest(desc.substr(prefix.size()));
                std::size_t used = 0;
                double eps = 0.0;
                try
                {
                    eps = std::stod(rest, &used);
                }
                catch(const std::exception &)
                {
                    used = 0;
                }
                if(used == 0 || used != rest.size())
                    throw ConfigError("activation: cannot parse epsilon in '" + std::string(desc) + "'");
                if(!(eps > 0.0) || !std::isfinite(eps))
                    throw ConfigError("activation: epsilon must be positive in '" + std::string(desc) + "'");
                return sigmoid(eps);
            }
            throw ConfigError("activation: unknown activation '" + std::string(desc) + "'");
        }

        ActivationKind kind() const noexcept { return kind_; }
        double epsilon() const noexcept { return epsilon_; }

        Smoothness smoothness() const noexcept
        {
            switch(kind_)
            {
            case ActivationKind::Sigmoid:
            case ActivationKind::Tanh:
                return Smoothness::C2;
            case ActivationKind::Relu:
                return Smoothness::PiecewiseC0;
            case ActivationKind::Step:
                break;
            }
            return Smoothness::Discontinuous;
        }

        bool has_d1() const noexcept { return smoothness() != Smoothness::Discontinuous; }
        bool has_d2() const noexcept { return smoothness() == Smoothness::C2; }

        std::string to_string() const
        {
            switch(kind_)
            {
            case ActivationKind::Sigmoid:
            {
                std::ostringstream os;
                os.precision(17);
                os << "sigmoid:" << epsilon_;
                return os.str();
            }
            case ActivationKind::Tanh:
                return "tanh";
            case ActivationKind::Relu:
                return "relu";
            case ActivationKind::Step:
                break;
            }
            return "step";
        }

        template<typename Real>
        Real value(Real t) const noexcept
        {
            switch(kind_)
            {
            case ActivationKind::Sigmoid:
            {
                const Real u = t / static_cast<Real>(epsilon_);
                const Real e = std::exp(-std::abs(u));
                return u >= 0 ? Real(1) / (1 + e) : e / (1 + e);
            }
            case ActivationKind::Tanh:
                return std::tanh(t);
            case ActivationKind::Relu:
                return t > 0 ? t : Real(0);
            case ActivationKind::Step:
                break;
            }
            if(t < 0)
                return Real(0);
            return t > 0 ? Real(1) : Real(0.5);
        }

        /// First derivative. ReLU uses sigma'(0) = 0; step has none.
        template<typename Real>
        Real d1(Real t) const
        {
            switch(kind_)
            {
            case ActivationKind::Sigmoid:
            {
                // written in |u| so the result is exactly even in t
                const Real eps = static_cast<Real>(epsilon_);
                const Real e = std::exp(-std::abs(t / eps));
                const Real s = 1 + e;
                return e / (s * s) / eps;
            }
            case ActivationKind::Tanh:
            {
                const Real th = std::tanh(t);
                return 1 - th * th;
            }
            case ActivationKind::Relu:
                return t > 0 ? Real(1) : Real(0);
            case ActivationKind::Step:
                break;
            }
            throw SmoothnessError("activation 'step' has no first derivative");
        }

        template<typename Real>
        Real d2(Real t) const
        {
            switch(kind_)
            {
            case ActivationKind::Sigmoid:
            {
                const Real eps = static_cast<Real>(epsilon_);
                const Real u = t / eps;
                const Real e = std::exp(-std::abs(u));
                const Real s = 1 + e;
                const Real odd = (u >= 0 ? Real(-1) : Real(1)) * (1 - e) / s; // 1 - 2 sigma(t)
                return e / (s * s) * odd / (eps * eps);
            }
            case ActivationKind::Tanh:
            {
                const Real th = std::tanh(t);
                return -2 * th * (1 - th * th);
            }
            case ActivationKind::Relu:
            case ActivationKind::Step:
                break;
            }
            throw SmoothnessError("activation '" + to_string() + "' has no second derivative");
        }

        bool operator==(const Activation &) const = default;

    private:
        Activation(ActivationKind kind, double epsilon) : kind_(kind), epsilon_(epsilon) { }

        ActivationKind kind_;
        double epsilon_;
    };
}
