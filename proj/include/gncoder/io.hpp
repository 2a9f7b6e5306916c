/// gncoder/io.hpp
///
/// Serialization: Params as JSON, iteration traces as CSV, diagnostic
/// reports as JSON lines. Requires nlohmann/json.

#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gncoder/diagnostics.hpp"
#include "gncoder/errors.hpp"
#include "gncoder/linalg.hpp"
#include "gncoder/network.hpp"
#include "gncoder/solver.hpp"

namespace gncoder
{
    using json = nlohmann::json;

    /// NaN and infinities have no JSON spelling; they become null.
    inline json number_or_null(double v)
    {
        return std::isfinite(v) ? json(v) : json(nullptr);
    }

    /// {"N":..., "n":..., "alpha":[...], "w":[[...], ...], "theta":[...]}
    template<typename Real>
    json params_to_json(const BasicParams<Real> &p)
    {
        json alpha = json::array(), w = json::array(), theta = json::array();
        for(std::size_t s = 0; s < p.units(); ++s)
        {
            alpha.push_back(static_cast<double>(p.alpha(s)));
            json row = json::array();
            for(std::size_t t = 0; t < p.dim(); ++t)
                row.push_back(static_cast<double>(p.w(s, t)));
            w.push_back(std::move(row));
            theta.push_back(static_cast<double>(p.theta(s)));
        }
        return {{"N", p.units()}, {"n", p.dim()}, {"alpha", alpha}, {"w", w}, {"theta", theta}};
    }

    template<typename Real = double>
    BasicParams<Real> params_from_json(const json &j)
    {
        try
        {
            const auto units = j.at("N").get<std::size_t>();
            const auto dim = j.at("n").get<std::size_t>();
            const auto alpha = j.at("alpha").get<std::vector<double>>();
            const auto w = j.at("w").get<std::vector<std::vector<double>>>();
            const auto theta = j.at("theta").get<std::vector<double>>();
            if(alpha.size() != units || theta.size() != units || w.size() != units)
                throw ConfigError("params: alpha, w and theta must have N entries");
            BasicParams<Real> p(units, dim);
            for(std::size_t s = 0; s < units; ++s)
            {
                if(w[s].size() != dim)
                    throw ConfigError("params: every row of w must have n entries");
                p.alpha(s) = static_cast<Real>(alpha[s]);
                for(std::size_t t = 0; t < dim; ++t)
                    p.w(s, t) = static_cast<Real>(w[s][t]);
                p.theta(s) = static_cast<Real>(theta[s]);
            }
            return p;
        }
        catch(const json::exception &e)
        {
            throw ConfigError(std::string("params: ") + e.what());
        }
        catch(const ShapeError &e)
        {
            throw ConfigError(std::string("params: ") + e.what());
        }
    }

    /// CSV iter,residual,step_norm,param_error,rank,status. The status column
    /// is "running" except on the terminal record.
    template<typename Real>
    void write_trace_csv(std::ostream &os, const BasicIterationTrace<Real> &trace)
    {
        os << "iter,residual,step_norm,param_error,rank,status\n";
        os << std::setprecision(17);
        for(std::size_t i = 0; i < trace.records.size(); ++i)
        {
            const auto &r = trace.records[i];
            const bool last = i + 1 == trace.records.size();
            os << r.iter << ',' << r.residual << ',' << r.step_norm << ',';
            if(std::isnan(r.param_error))
                os << "nan";
            else
                os << r.param_error;
            os << ',' << r.rank << ',' << (last && trace.has_status() ? to_string(trace.status()) : "running")
               << '\n';
        }
    }

    inline json constants_to_json(const ConvergenceConstants &c)
    {
        return {{"C_I", number_or_null(c.c_i)},
            {"C_L", number_or_null(c.c_l)},
            {"C_I_pinv", number_or_null(c.c_i_pinv)},
            {"C_T", number_or_null(c.c_t)},
            {"C_N", number_or_null(c.c_i * c.c_l)},
            {"rho", number_or_null(c.rho)},
            {"h", number_or_null(c.h)},
            {"h_pinv", number_or_null(c.rho * c.c_i_pinv * c.c_l / 2.0)},
            {"samples", c.samples},
            {"pairs", c.pairs},
            {"insufficient_samples", c.insufficient_samples}};
    }

    inline json report_to_json(const IndependenceReport &r)
    {
        return {{"activation", r.activation},
            {"N", r.units},
            {"n", r.dim},
            {"m", r.points_per_axis},
            {"seed", r.seed},
            {"min_singular_value", r.min_singular_value},
            {"max_singular_value", r.max_singular_value},
            {"rank", r.rank},
            {"qr_rank", r.qr_rank},
            {"degenerate", r.degenerate},
            {"gram_condition", number_or_null(r.gram_condition)},
            {"rank_tol", r.rank_tol},
            {"params", params_to_json(r.params)}};
    }

    inline json report_to_json(const ConeReport &r)
    {
        json rows = json::array();
        for(Eigen::Index i = 0; i < r.r_matrix.rows(); ++i)
        {
            json row = json::array();
            for(Eigen::Index j = 0; j < r.r_matrix.cols(); ++j)
                row.push_back(r.r_matrix(i, j));
            rows.push_back(std::move(row));
        }
        return {{"p1", params_to_json(r.p1)},
            {"p2", params_to_json(r.p2)},
            {"r_matrix", rows},
            {"dev", r.dev},
            {"decomposition_residual", r.decomposition_residual},
            {"ratio", number_or_null(r.ratio)}};
    }

    inline json report_to_json(const MysovskiiReport &r)
    {
        json pts = json::array();
        for(const auto &p : r.points)
            pts.push_back({{"s", p.s}, {"lhs", p.lhs}, {"bound_ratio", p.bound_ratio}});
        return {{"points", pts}, {"max_ratio", r.max_ratio}};
    }

    /// 64-bit FNV-1a.
    inline std::uint64_t fnv1a(std::string_view bytes)
    {
        std::uint64_t h = 14695981039346656037ull;
        for(unsigned char c : bytes)
        {
            h ^= c;
            h *= 1099511628211ull;
        }
        return h;
    }

    /// Hex FNV-1a hash of the canonical (sorted-key, compact) dump.
    inline std::string config_hash(const json &cfg)
    {
        std::ostringstream os;
        os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(cfg.dump());
        return os.str();
    }
}
