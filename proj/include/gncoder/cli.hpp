/// gncoder/cli.hpp
///
/// Batch experiment runner behind the `gncoder` executable. Each subcommand
/// reads a JSON config (merged over built-in defaults), derives every random
/// quantity from the master seed and writes its outputs into the output
/// directory as <command>-<config hash>-seed<seed>.<ext>.
///
/// Exit codes: 0 on completion (non-convergence included), 1 on usage or
/// configuration errors, 2 on numeric failure.
///
/// Requires CLI11 and nlohmann/json.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gncoder/activations.hpp"
#include "gncoder/diagnostics.hpp"
#include "gncoder/errors.hpp"
#include "gncoder/forward_ops.hpp"
#include "gncoder/function_space.hpp"
#include "gncoder/io.hpp"
#include "gncoder/linalg.hpp"
#include "gncoder/network.hpp"
#include "gncoder/solver.hpp"

namespace gncoder::cli
{
    /// Largest grid for which solve metadata includes cond(F).
    inline constexpr std::size_t cond_node_limit = 1024;

    inline json default_config()
    {
        return json::parse(R"({
            "activation": "sigmoid:1",
            "grid": {"dim": 1, "m": 64},
            "operator": "volterra",
            "precision": "double",
            "seed": 1,
            "output_dir": "out",
            "noise": 0.0,
            "units": 2,
            "sampler": {"alpha": 2.0, "w": 5.0, "theta": 3.0, "alpha_band": 0.05, "allow_zero_alpha": false},
            "start": {"radius": 0.05},
            "solver": {"mode": "gauss_newton", "max_iters": 50, "tol_residual": 1e-12, "tol_step": 1e-14,
                       "rank_tol": 1e-10, "step_size": 0.01, "param_box": 10.0},
            "lipschitz": {"samples": 20},
            "independence": {"units": 3, "trials": 100},
            "cone": {"t": [1e-2, 1e-3, 1e-4]},
            "mysovskii": {"probes": 20, "radius": 0.05, "s": [0.25, 0.5, 0.75, 1.0]},
            "manifold": {"lo": -1.0, "hi": 1.0, "steps": 41},
            "derivatives": {"probes": 20, "units": 3, "step": 1e-5, "second_step": 1e-4}
        })");
    }

    /// Independent generator for one named use of the master seed.
    inline std::mt19937_64 stream(std::uint64_t seed, std::uint32_t id)
    {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), id};
        return std::mt19937_64(seq);
    }

    enum StreamId : std::uint32_t
    {
        stream_truth = 1,
        stream_start = 2,
        stream_noise = 3,
        stream_lipschitz = 4,
        stream_probe = 5
    };

    /// Effective experiment configuration: defaults, then the file, then
    /// command-line overrides.
    struct Experiment
    {
        std::string command;
        json config;
        std::string hash;
        std::uint64_t seed = 0;
        std::filesystem::path out_dir;

        std::filesystem::path output(const std::string &ext) const
        {
            return out_dir / (command + "-" + hash + "-seed" + std::to_string(seed) + "." + ext);
        }

        template<typename T>
        T get(const char *section, const char *key) const
        {
            try
            {
                return config.at(section).at(key).get<T>();
            }
            catch(const json::exception &e)
            {
                throw ConfigError(std::string("config: ") + section + "." + key + ": " + e.what());
            }
        }

        template<typename T>
        T get(const char *key) const
        {
            try
            {
                return config.at(key).get<T>();
            }
            catch(const json::exception &e)
            {
                throw ConfigError(std::string("config: ") + key + ": " + e.what());
            }
        }

        Activation activation() const { return Activation::parse(get<std::string>("activation")); }

        template<typename Real = double>
        BasicGridPtr<Real> grid() const
        {
            try
            {
                return make_grid<Real>(get<std::size_t>("grid", "dim"), get<std::size_t>("grid", "m"));
            }
            catch(const SizeError &e)
            {
                throw ConfigError(e.what());
            }
        }

        SamplerBox sampler() const
        {
            SamplerBox b;
            b.alpha = get<double>("sampler", "alpha");
            b.w = get<double>("sampler", "w");
            b.theta = get<double>("sampler", "theta");
            b.alpha_band = get<double>("sampler", "alpha_band");
            b.allow_zero_alpha = get<bool>("sampler", "allow_zero_alpha");
            try
            {
                b.validate();
            }
            catch(const RangeError &e)
            {
                throw ConfigError(e.what());
            }
            return b;
        }
    };

    inline json load_config_file(const std::string &path)
    {
        std::ifstream in(path);
        if(!in)
            throw ConfigError("cannot open config file '" + path + "'");
        try
        {
            return json::parse(in);
        }
        catch(const json::exception &e)
        {
            throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
        }
    }

    template<typename Real>
    struct Synthetic
    {
        BasicParams<Real> truth;
        BasicGridFunction<Real> clean;
        BasicGridFunction<Real> data;
        double noise_norm = 0.0;
    };

    /// Ground truth p (explicit "truth" in the config, otherwise drawn from the
    /// sampler), exact data F Psi(p) and optional additive Gaussian noise of
    /// per-node standard deviation "noise".
    template<typename Real>
    Synthetic<Real> synth_problem(const Experiment &ex, const Activation &a, const BasicGridPtr<Real> &g,
        const BasicLinearOperator<Real> &f)
    {
        Synthetic<Real> s;
        if(ex.config.contains("truth"))
            s.truth = params_from_json<Real>(ex.config.at("truth"));
        else
        {
            auto rng = stream(ex.seed, stream_truth);
            s.truth = sample_params<Real>(ex.get<std::size_t>("units"), g->dim(), ex.sampler(), rng);
        }
        if(s.truth.dim() != g->dim())
            throw ConfigError("truth: input dimension does not match the grid");
        s.clean = f.apply(eval_psi(s.truth, a, g));
        s.data = s.clean;
        const double delta = ex.get<double>("noise");
        if(!(delta >= 0.0))
            throw ConfigError("noise must be nonnegative");
        if(delta > 0.0)
        {
            auto rng = stream(ex.seed, stream_noise);
            std::normal_distribution<double> normal(0.0, delta);
            for(Real &v : s.data.values())
                v += static_cast<Real>(normal(rng));
        }
        s.noise_norm = static_cast<double>(norm(BasicGridFunction<Real>(s.data - s.clean)));
        return s;
    }

    /// p0 = truth + r u with u a seeded unit direction, or an explicit "initial".
    template<typename Real>
    BasicParams<Real> start_point(const Experiment &ex, const BasicParams<Real> &truth)
    {
        if(ex.config.contains("initial"))
        {
            auto p = params_from_json<Real>(ex.config.at("initial"));
            if(!p.same_shape(truth))
                throw ConfigError("initial: shape differs from the truth");
            return p;
        }
        const double r = ex.get<double>("start", "radius");
        if(!(r >= 0.0))
            throw ConfigError("start.radius must be nonnegative");
        auto rng = stream(ex.seed, stream_start);
        std::normal_distribution<double> normal(0.0, 1.0);
        Vec<Real> u(truth.n_star());
        Real len = 0;
        while(len == 0)
        {
            for(Real &v : u)
                v = static_cast<Real>(normal(rng));
            len = euclidean_norm(u);
        }
        return offset(truth, u, static_cast<Real>(r) / len);
    }

    inline SolveMode parse_mode(const std::string &s)
    {
        if(s == "gauss_newton")
            return SolveMode::GaussNewton;
        if(s == "gradient_descent")
            return SolveMode::GradientDescent;
        throw ConfigError("solver.mode: expected gauss_newton or gradient_descent, got '" + s + "'");
    }

    template<typename Real>
    int run_solve(const Experiment &ex, std::ostream &log)
    {
        const Activation a = ex.activation();
        const auto g = ex.grid<Real>();
        const auto f = make_operator<Real>(ex.get<std::string>("operator"), g);
        const Synthetic<Real> syn = synth_problem(ex, a, g, f);

        BasicSolveConfig<Real> cfg;
        cfg.activation = a;
        cfg.grid = g;
        cfg.forward_operator = f.descriptor();
        cfg.initial = start_point(ex, syn.truth);
        cfg.data = syn.data;
        cfg.truth = syn.truth;
        cfg.max_iters = ex.get<std::size_t>("solver", "max_iters");
        cfg.tol_residual = ex.get<double>("solver", "tol_residual");
        cfg.tol_step = ex.get<double>("solver", "tol_step");
        cfg.rank_tol = ex.get<double>("solver", "rank_tol");
        cfg.mode = parse_mode(ex.get<std::string>("solver", "mode"));
        cfg.step_size = ex.get<double>("solver", "step_size");
        cfg.param_box = ex.get<double>("solver", "param_box");
        cfg.seed = ex.seed;
        const BasicIterationTrace<Real> trace = solve(cfg);

        json meta;
        meta["command"] = ex.command;
        meta["config"] = ex.config;
        meta["config_hash"] = ex.hash;
        meta["seed"] = ex.seed;
        meta["status"] = to_string(trace.status());
        meta["iterations"] = trace.iterations();
        meta["final_residual"] = number_or_null(trace.records.back().residual);
        meta["final_param_error"] = number_or_null(trace.records.back().param_error);
        meta["boundary_events"] = trace.boundary_events;
        meta["deficit"] = trace.deficit;
        meta["message"] = trace.message;
        meta["noise_norm"] = syn.noise_norm;
        meta["truth"] = params_to_json(syn.truth);
        meta["initial"] = params_to_json(cfg.initial);
        meta["final"] = params_to_json(trace.final_params);
        try
        {
            meta["order"] = convergence_order(trace);
        }
        catch(const InsufficientDataError &)
        {
            meta["order"] = nullptr;
        }

        const double rho = static_cast<double>(distance(cfg.initial, syn.truth));
        if(rho > 0.0)
        {
            try
            {
                auto c = lipschitz_constants(syn.truth, a, g, rho, ex.get<std::size_t>("lipschitz", "samples"),
                    stream(ex.seed, stream_lipschitz)(), cfg.param_box);
                c.rho = rho;
                c.h = radius_check(c).h;
                meta["constants"] = constants_to_json(c);
            }
            catch(const Error &e)
            {
                meta["constants"] = {{"error", e.what()}};
            }
        }
        meta["cond_F"] = g->size() <= cond_node_limit ? number_or_null(f.condition_number()) : json(nullptr);

        {
            std::ofstream os(ex.output("csv"));
            write_trace_csv(os, trace);
        }
        std::ofstream(ex.output("meta.json")) << meta.dump(2) << '\n';

        log << "solve: " << to_string(trace.status()) << " after " << trace.iterations() << " iterations, residual "
            << trace.records.back().residual << ", parameter error " << trace.records.back().param_error << '\n';
        log << "wrote " << ex.output("csv").string() << '\n';
        return trace.status() == SolveStatus::NumericError ? 2 : 0;
    }

    inline void write_meta(const Experiment &ex, json summary)
    {
        summary["command"] = ex.command;
        summary["config"] = ex.config;
        summary["config_hash"] = ex.hash;
        summary["seed"] = ex.seed;
        std::ofstream(ex.output("meta.json")) << summary.dump(2) << '\n';
    }

    inline int run_independence(const Experiment &ex, std::ostream &log)
    {
        const Activation a = ex.activation();
        const auto g = ex.grid();
        const auto trials = ex.get<std::size_t>("independence", "trials");
        const auto units = ex.get<std::size_t>("independence", "units");
        const double rank_tol = ex.get<double>("solver", "rank_tol");
        const auto reports = independence_trials(a, units, g->dim(), g, ex.sampler(), ex.seed, trials, rank_tol);

        std::size_t degenerate = 0, rank_mismatch = 0;
        std::ofstream os(ex.output("jsonl"));
        for(const auto &r : reports)
        {
            os << report_to_json(r).dump() << '\n';
            degenerate += r.degenerate;
            rank_mismatch += r.rank != r.qr_rank;
        }
        write_meta(ex, {{"trials", trials}, {"degenerate", degenerate}, {"rank_mismatch", rank_mismatch}});
        log << "independence: " << degenerate << " of " << trials << " trials degenerate\n";
        return 0;
    }

    inline int run_cone(const Experiment &ex, std::ostream &log)
    {
        const Activation a = ex.activation();
        const auto g = ex.grid();
        const auto f = make_operator<double>(ex.get<std::string>("operator"), g);
        const Params p1 = synth_problem(ex, a, g, f).truth;

        auto rng = stream(ex.seed, stream_probe);
        std::normal_distribution<double> normal(0.0, 1.0);
        Coeffs d(p1.n_star());
        for(double &v : d)
            v = normal(rng);
        const double len = euclidean_norm(d);
        for(double &v : d)
            v /= len;

        std::ofstream os(ex.output("jsonl"));
        json ratios = json::array();
        for(double t : ex.get<std::vector<double>>("cone", "t"))
        {
            const ConeReport r = cone_check(p1, offset(p1, d, t), a, g, f, ex.get<double>("solver", "rank_tol"));
            json j = report_to_json(r);
            j["t"] = t;
            os << j.dump() << '\n';
            ratios.push_back(number_or_null(r.ratio));
            log << "cone t=" << t << ": dev " << r.dev << ", ratio " << r.ratio << ", decomposition residual "
                << r.decomposition_residual << '\n';
        }
        write_meta(ex, {{"ratios", ratios}});
        return 0;
    }

    inline int run_mysovskii(const Experiment &ex, std::ostream &log)
    {
        const Activation a = ex.activation();
        const auto g = ex.grid();
        const auto f = make_operator<double>(ex.get<std::string>("operator"), g);
        const Params center = synth_problem(ex, a, g, f).truth;
        const double radius = ex.get<double>("mysovskii", "radius");
        const double box = ex.get<double>("solver", "param_box");
        const auto s_values = ex.get<std::vector<double>>("mysovskii", "s");

        auto c = lipschitz_constants(center, a, g, radius, ex.get<std::size_t>("lipschitz", "samples"),
            stream(ex.seed, stream_lipschitz)(), box);
        auto rng = stream(ex.seed, stream_probe);
        double max_ratio = 0.0;
        std::ofstream os(ex.output("jsonl"));
        for(std::size_t i = 0, n = ex.get<std::size_t>("mysovskii", "probes"); i < n; ++i)
        {
            const Params p = sample_ball(center, radius, rng);
            const Params q = sample_ball(center, radius, rng);
            const MysovskiiReport r = mysovskii_check(p, q, s_values, a, g, f, ex.get<double>("solver", "rank_tol"), box);
            json j = report_to_json(r);
            j["probe"] = i;
            os << j.dump() << '\n';
            max_ratio = std::max(max_ratio, r.max_ratio);
        }
        write_meta(ex, {{"max_ratio", max_ratio}, {"constants", constants_to_json(c)},
            {"bound", c.c_i * c.c_l}, {"bound_pinv", c.c_i_pinv * c.c_l}});
        log << "mysovskii: max ratio " << max_ratio << ", C_I*C_L " << c.c_i * c.c_l << ", C_I(pinv)*C_L "
            << c.c_i_pinv * c.c_l << '\n';
        return 0;
    }

    inline int run_manifold(const Experiment &ex, std::ostream &log)
    {
        std::ofstream os(ex.output("csv"));
        manifold_sweep(os, ex.get<double>("manifold", "lo"), ex.get<double>("manifold", "hi"),
            ex.get<std::size_t>("manifold", "steps"));
        write_meta(ex, json::object());
        log << "wrote " << ex.output("csv").string() << '\n';
        return 0;
    }

    /// Central-difference check of the Jacobian and of the second derivative
    /// bilinear form at seeded random (p, node) probes.
    inline int run_check_derivatives(const Experiment &ex, std::ostream &log)
    {
        const Activation a = ex.activation();
        const auto g = ex.grid();
        const auto units = ex.get<std::size_t>("derivatives", "units");
        const double h = ex.get<double>("derivatives", "step");
        const double h2 = ex.get<double>("derivatives", "second_step");
        auto rng = stream(ex.seed, stream_probe);
        std::uniform_int_distribution<std::size_t> node(0, g->size() - 1);
        std::normal_distribution<double> normal(0.0, 1.0);
        const SamplerBox box = ex.sampler();

        double worst_jac = 0.0, worst_second = 0.0;
        std::ofstream os(ex.output("jsonl"));
        for(std::size_t i = 0, n = ex.get<std::size_t>("derivatives", "probes"); i < n; ++i)
        {
            const Params p = sample_params(units, g->dim(), box, rng);
            const std::size_t k = node(rng);
            const auto jac = jacobian(p, a, g);
            double num = 0.0, den = 0.0;
            for(std::size_t c = 0; c < p.n_star(); ++c)
            {
                Coeffs e(p.n_star(), 0.0);
                e[c] = 1.0;
                const double fd = (eval_psi(offset(p, e, h), a, g)[k] - eval_psi(offset(p, e, -h), a, g)[k]) / (2 * h);
                num = std::max(num, std::abs(jac.columns[c][k] - fd));
                den = std::max(den, std::abs(fd));
            }
            const double jac_err = den > 0.0 ? num / den : num;

            json j = {{"probe", i}, {"node", k}, {"jacobian_rel_err", jac_err}};
            if(a.has_d2())
            {
                Coeffs u(p.n_star()), v(p.n_star());
                for(double &x : u)
                    x = normal(rng);
                for(double &x : v)
                    x = normal(rng);
                const double exact = second_derivative_bilinear(p, a, g, u, v)[k];
                auto at = [&](double su, double sv) {
                    Params q = offset(p, u, su * h2);
                    return eval_psi(offset(q, v, sv * h2), a, g)[k];
                };
                const double fd = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4 * h2 * h2);
                const double err = std::abs(exact - fd) / std::max(std::abs(fd), 1e-300);
                j["second_rel_err"] = err;
                worst_second = std::max(worst_second, err);
            }
            worst_jac = std::max(worst_jac, jac_err);
            os << j.dump() << '\n';
        }
        write_meta(ex, {{"max_jacobian_rel_err", worst_jac}, {"max_second_rel_err", worst_second}});
        log << "check-derivatives: max Jacobian error " << worst_jac << ", max second-derivative error "
            << worst_second << '\n';
        return 0;
    }

    /// Entry point of the gncoder executable; `log` receives progress lines.
    inline int run(int argc, const char *const *argv, std::ostream &log = std::cout, std::ostream &err = std::cerr)
    {
        CLI::App app{"Gauss-Newton experiments for network-coded inverse problems", "gncoder"};
        app.require_subcommand(1);

        std::string config_path, out_dir, precision;
        std::uint64_t seed = 0;
        std::size_t trials = 0;
        const std::vector<std::pair<std::string, std::string>> commands = {
            {"solve", "Gauss-Newton (or gradient descent) solve on a synthetic problem"},
            {"independence", "Monte-Carlo linear independence trials of the Jacobian columns"},
            {"cone", "order-reversed tangential cone check on shrinking perturbations"},
            {"mysovskii", "generalized Newton-Mysovskii bound probes"},
            {"manifold", "sweep of F(x,y) = (xy, x^2+y^2) and its Jacobian determinant"},
            {"check-derivatives", "finite-difference check of the analytic derivatives"}};
        for(const auto &[name, help] : commands)
        {
            CLI::App *sub = app.add_subcommand(name, help);
            sub->add_option("-c,--config", config_path, "JSON config file");
            sub->add_option("-o,--out", out_dir, "output directory");
            sub->add_option("-s,--seed", seed, "master seed");
            if(name == "independence")
                sub->add_option("-t,--trials", trials, "number of trials");
            if(name == "solve")
                sub->add_option("-p,--precision", precision, "double or extended")
                    ->check(CLI::IsMember({"double", "extended"}));
        }

        if(argc > 1 && argv[1][0] != '-')
        {
            bool known = false;
            for(const auto &c : commands)
                known = known || c.first == argv[1];
            if(!known)
            {
                err << "gncoder: unknown subcommand '" << argv[1] << "'\n\n" << app.help();
                return 1;
            }
        }

        try
        {
            app.parse(argc, argv);
        }
        catch(const CLI::CallForHelp &)
        {
            log << app.help();
            return 0;
        }
        catch(const CLI::ParseError &e)
        {
            err << "gncoder: " << e.what() << "\n\n" << app.help();
            return 1;
        }

        Experiment ex;
        ex.command = app.get_subcommands().front()->get_name();
        const CLI::App &sub = *app.get_subcommands().front();
        auto given = [&sub](const char *name) {
            const CLI::Option *o = sub.get_option_no_throw(name);
            return o != nullptr && o->count() > 0;
        };
        try
        {
            ex.config = default_config();
            if(!config_path.empty())
                ex.config.merge_patch(load_config_file(config_path));
            if(given("--out"))
                ex.config["output_dir"] = out_dir;
            if(given("--seed"))
                ex.config["seed"] = seed;
            if(given("--trials"))
                ex.config["independence"]["trials"] = trials;
            if(given("--precision"))
                ex.config["precision"] = precision;
            ex.seed = ex.get<std::uint64_t>("seed");
            ex.out_dir = ex.get<std::string>("output_dir");
            // where results go is not part of what the experiment is
            json identity = ex.config;
            identity.erase("output_dir");
            ex.hash = config_hash(identity);
            std::filesystem::create_directories(ex.out_dir);

            if(ex.command == "solve")
            {
                const auto prec = ex.get<std::string>("precision");
                if(prec == "double")
                    return run_solve<double>(ex, log);
                if(prec == "extended")
                    return run_solve<long double>(ex, log);
                throw ConfigError("precision must be double or extended, got '" + prec + "'");
            }
            if(ex.command == "independence")
                return run_independence(ex, log);
            if(ex.command == "cone")
                return run_cone(ex, log);
            if(ex.command == "mysovskii")
                return run_mysovskii(ex, log);
            if(ex.command == "manifold")
                return run_manifold(ex, log);
            return run_check_derivatives(ex, log);
        }
        catch(const ConfigError &e)
        {
            err << "gncoder: configuration error: " << e.what() << '\n';
            return 1;
        }
        catch(const UnsupportedDimensionError &e)
        {
            err << "gncoder: configuration error: " << e.what() << '\n';
            return 1;
        }
        catch(const ResolutionError &e)
        {
            err << "gncoder: configuration error: " << e.what() << '\n';
            return 1;
        }
        catch(const std::filesystem::filesystem_error &e)
        {
            err << "gncoder: " << e.what() << '\n';
            return 1;
        }
        catch(const std::exception &e)
        {
            err << "gncoder: " << e.what() << '\n';
            return 2;
        }
    }
}
