#pragma once

// Command-line front end. `run` parses argv, executes one subcommand and
// returns the exit status:
//   0 success, 2 parse error, 3 invalid model or input, 4 divergent series,
//   5 numerical failure, 1 anything else.
// Failures print one line `error\t<kind>\t<message>` to the error stream.

#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "phpoisson/compound.hpp"
#include "phpoisson/em.hpp"
#include "phpoisson/errors.hpp"
#include "phpoisson/genab0.hpp"
#include "phpoisson/io.hpp"
#include "phpoisson/ph_poisson.hpp"
#include "phpoisson/simulate.hpp"

namespace phpoisson::cli {

enum ExitCode : int {
    kOk = 0,
    kInternal = 1,
    kParse = 2,
    kValidation = 3,
    kDivergence = 4,
    kNumerical = 5,
};

struct Options {
    std::string model;
    std::string severity;
    std::string sample;
    std::string out;
    std::string config;
    std::string model_out;
    std::optional<std::size_t> n_max;
    double tol = 1e-12;
    bool tol_given = false;
    std::uint64_t seed = 0;
    std::size_t max_iter = 200;
    bool pretty = false;
    bool renormalize = false;
    int digits = 17;
    std::size_t n_samples = 1000;
    std::string method = "rejection";
    bool histogram = false;
    std::size_t phases = 0;
    std::uint64_t max_rejections = 10000;
    std::size_t n_moments = 4;
    unsigned threads = 1;
};

namespace detail {

using io::format_number;

/// Writes to --out when given, otherwise to the supplied stream.
class Sink {
public:
    Sink(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
        if (!path.empty()) {
            file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
            if (!*file_) throw ParseError("cannot open '" + path + "' for writing");
            stream_ = file_.get();
        }
    }
    std::ostream& operator*() { return *stream_; }

private:
    std::unique_ptr<std::ofstream> file_;
    std::ostream* stream_;
};

inline void footer(std::ostream& os, double tail_bound, const std::string& extra = "") {
    os << "# tail_bound=" << format_number(tail_bound);
    if (!extra.empty()) os << ' ' << extra;
    os << '\n';
}

inline void require(const std::string& value, const char* flag) {
    if (value.empty()) throw ParseError(std::string("missing required option ") + flag);
}

inline io::Model load_model(const Options& o) {
    require(o.model, "--model");
    return io::read_model(o.model, o.renormalize);
}

inline PHPoissonRep as_ph(const io::Model& m, const char* what) {
    if (const auto* ph = std::get_if<PHPoissonRep>(&m)) return *ph;
    if (const auto* phys = std::get_if<PhysicalRep>(&m)) return from_physical(*phys);
    throw ValidationError(std::string(what) + ": requires a ph-poisson or physical model");
}

inline GenAB0Rep as_genab0(const io::Model& m, const char* what) {
    if (const auto* g = std::get_if<GenAB0Rep>(&m)) return *g;
    if (std::holds_alternative<PHPoissonRep>(m) || std::holds_alternative<PhysicalRep>(m)) {
        return as_ph(m, what).as_genab0();
    }
    throw ValidationError(std::string(what) + ": genab1 models are not supported here");
}

inline DiscreteDensity frequency_density(const io::Model& model, const Options& o) {
    if (const auto* g = std::get_if<GenAB0Rep>(&model)) {
        return o.n_max ? density(*g, *o.n_max) : density_to_tolerance(*g, o.tol);
    }
    if (const auto* g1 = std::get_if<io::GenAB1Model>(&model)) {
        return o.n_max ? density_ab1(g1->rep, *o.n_max) : density_ab1_to_tolerance(g1->rep, o.tol);
    }
    const PHPoissonRep ph = as_ph(model, "pmf");
    return o.n_max ? pmf_sequence(ph, *o.n_max) : pmf_to_tolerance(ph, o.tol);
}

inline int cmd_pmf(const Options& o, std::ostream& out) {
    const auto model = load_model(o);
    const auto d = frequency_density(model, o);
    Sink sink(o.out, out);
    *sink << "n,p\n";
    for (std::size_t n = 0; n < d.probs.size(); ++n) *sink << n << ',' << format_number(d.probs[n], o.digits) << '\n';
    footer(*sink, d.tail_bound);
    return kOk;
}

inline int cmd_moments(const Options& o, std::ostream& out) {
    const auto model = load_model(o);
    const std::size_t k_max = std::max<std::size_t>(2, o.n_moments);
    std::vector<double> fm(k_max + 1, 0.0);
    double tail = 0.0;
    if (std::holds_alternative<GenAB0Rep>(model)) {
        const auto& g = std::get<GenAB0Rep>(model);
        const double tol = std::max(o.tol, 1e-13);
        for (std::size_t k = 1; k <= k_max; ++k) fm[k] = factorial_moment(g, k, tol);
        tail = tol;
    } else if (std::holds_alternative<io::GenAB1Model>(model)) {
        throw ValidationError("moments: genab1 models are not supported");
    } else {
        const PHPoissonRep ph = as_ph(model, "moments");
        for (std::size_t k = 1; k <= k_max; ++k) fm[k] = factorial_moment(ph, k);
    }
    const auto mom = moments_from_factorial(fm[1], fm[2]);
    Sink sink(o.out, out);
    std::vector<std::pair<std::string, double>> rows{{"mean", mom.mean}, {"variance", mom.variance}, {"cv", mom.cv}};
    for (std::size_t k = 1; k <= k_max; ++k) rows.emplace_back("factorial_moment_" + std::to_string(k), fm[k]);
    if (o.pretty) {
        for (const auto& [name, value] : rows) {
            *sink << std::left << std::setw(22) << name << ' ' << std::setprecision(10) << value << '\n';
        }
    } else {
        *sink << "quantity,value\n";
        for (const auto& [name, value] : rows) *sink << name << ',' << format_number(value, o.digits) << '\n';
    }
    footer(*sink, tail);
    return kOk;
}

inline int cmd_reduce(const Options& o, std::ostream& out) {
    const auto model = load_model(o);
    const auto* g = std::get_if<GenAB0Rep>(&model);
    if (!g) throw ValidationError("reduce: requires a genab0 model");
    const auto reduced = reduce_useless(*g);
    Sink sink(o.out, out);
    *sink << io::dump_model(reduced, o.digits, o.pretty) << '\n';
    footer(*sink, 0.0, "order=" + std::to_string(g->order()) + "->" + std::to_string(reduced.order()));
    return kOk;
}

inline int cmd_convert(const Options& o, std::ostream& out) {
    const auto model = load_model(o);
    io::Model result;
    if (const auto* ph = std::get_if<PHPoissonRep>(&model)) {
        result = to_physical(*ph);
    } else if (const auto* phys = std::get_if<PhysicalRep>(&model)) {
        result = from_physical(*phys);
    } else {
        throw ValidationError("convert: requires a ph-poisson or physical model");
    }
    Sink sink(o.out, out);
    *sink << io::dump_model(result, o.digits, o.pretty) << '\n';
    footer(*sink, 0.0);
    return kOk;
}

inline int cmd_compound(const Options& o, std::ostream& out) {
    const auto model = load_model(o);
    require(o.severity, "--severity");
    const auto f = io::read_severity(o.severity);
    const GenAB0Rep rep = as_genab0(model, "compound");
    std::size_t n_max = 0;
    if (o.n_max) {
        n_max = *o.n_max;
    } else {
        const auto freq = density_to_tolerance(rep, std::max(o.tol, 1e-15));
        double m1 = 0.0;
        double m2 = 0.0;
        for (std::size_t n = 0; n < freq.probs.size(); ++n) {
            m1 += static_cast<double>(n) * freq.probs[n];
            m2 += static_cast<double>(n * n) * freq.probs[n];
        }
        n_max = suggest_horizon(m1, m2 - m1 * m1, f);
    }
    const auto g = panjer_vector(rep, f, n_max);
    Sink sink(o.out, out);
    *sink << "n,g\n";
    for (std::size_t n = 0; n < g.probs.size(); ++n) *sink << n << ',' << format_number(g.probs[n], o.digits) << '\n';
    footer(*sink, g.tail_bound);
    return kOk;
}

inline int cmd_simulate(const Options& o, std::ostream& out) {
    const auto model = load_model(o);
    SimConfig cfg;
    if (const auto* phys = std::get_if<PhysicalRep>(&model)) {
        cfg.phys = *phys;
    } else if (const auto* ph = std::get_if<PHPoissonRep>(&model)) {
        cfg.phys = to_physical(*ph);
    } else {
        throw ValidationError("simulate: requires a physical or ph-poisson model");
    }
    cfg.n_samples = o.n_samples;
    cfg.seed = o.seed;
    cfg.max_rejections = o.max_rejections;
    cfg.n_threads = o.threads;
    if (o.method == "rejection") cfg.method = SimMethod::rejection;
    else if (o.method == "conditioned") cfg.method = SimMethod::conditioned;
    else throw ParseError("simulate: --method must be 'rejection' or 'conditioned'");
    const auto res = draw_conditional(cfg);
    Sink sink(o.out, out);
    if (o.histogram) {
        *sink << "value,count\n";
        for (const auto& [value, count] : res.data.histogram()) *sink << value << ',' << count << '\n';
    } else {
        for (auto y : res.data.observations) *sink << y << '\n';
    }
    footer(*sink, 0.0,
           "acceptance_rate=" + format_number(res.acceptance_rate) + " attempts=" + std::to_string(res.attempts) +
               " survival_probability=" + format_number(res.survival_probability));
    return kOk;
}

inline int cmd_fit(const Options& o, std::ostream& out) {
    require(o.sample, "--sample");
    const auto y = io::read_sample(o.sample);
    if (y.empty()) throw ValidationError("fit: the sample is empty");
    io::FitConfig cfg;
    if (!o.config.empty()) cfg = io::parse_fit_config(io::read_file(o.config));
    FitOptions opt;
    opt.max_iter = cfg.max_iter.value_or(o.max_iter);
    opt.tol = cfg.tol.value_or(o.tol_given ? o.tol : 1e-8);
    EMParams theta0;
    if (cfg.theta0) {
        theta0 = *cfg.theta0;
    } else {
        const std::size_t m = o.phases ? o.phases : cfg.phases.value_or(2);
        std::optional<std::uint64_t> seed = cfg.seed;
        if (!seed && o.seed != 0) seed = o.seed;
        theta0 = default_start(y, static_cast<Index>(m), seed);
    }
    const auto trace = fit(y, theta0, opt);
    const Index m = theta0.order();
    Sink sink(o.out, out);
    *sink << "iter,loglik,nu";
    for (Index i = 0; i < m; ++i) *sink << ",alpha_" << i + 1;
    for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < m; ++j) *sink << ",p_" << i + 1 << '_' << j + 1;
    *sink << ",m_status,p_stochastic\n";
    for (const auto& r : trace.records) {
        *sink << r.iter << ',' << format_number(r.loglik, o.digits) << ',' << format_number(r.theta.nu, o.digits);
        for (Index i = 0; i < m; ++i) *sink << ',' << format_number(r.theta.alpha(i), o.digits);
        for (Index i = 0; i < m; ++i)
            for (Index j = 0; j < m; ++j) *sink << ',' << format_number(r.theta.P(i, j), o.digits);
        *sink << ',' << r.m_status << ',' << (r.p_stochastic ? 1 : 0) << '\n';
    }
    footer(*sink, 0.0,
           "converged=" + std::string(trace.converged ? "1" : "0") +
               " iterations=" + std::to_string(trace.records.size() - 1));
    if (!o.model_out.empty()) {
        std::ofstream mf(o.model_out, std::ios::binary);
        if (!mf) throw ParseError("cannot open '" + o.model_out + "' for writing");
        mf << io::dump_model(trace.final_theta().physical(), o.digits, o.pretty) << '\n';
        footer(mf, 0.0);
    }
    return kOk;
}

inline int cmd_kkt(const Options& o, std::ostream& out) {
    const auto model = load_model(o);
    require(o.sample, "--sample");
    const auto y = io::read_sample(o.sample);
    PhysicalRep phys;
    if (const auto* p = std::get_if<PhysicalRep>(&model)) phys = *p;
    else phys = to_physical(as_ph(model, "kkt"));
    const auto theta = EMParams::from_physical(phys);
    const auto stats = e_step(theta, y);
    const auto rep = kkt_residuals(theta, y, stats);
    Sink sink(o.out, out);
    *sink << "quantity,i,j,value\n";
    *sink << "r_nu,,," << format_number(rep.r_nu, o.digits) << '\n';
    *sink << "r_alpha,,," << format_number(rep.r_alpha, o.digits) << '\n';
    for (Index i = 0; i < theta.order(); ++i)
        for (Index j = 0; j < theta.order(); ++j) {
            *sink << "R_P," << i + 1 << ',' << j + 1 << ',';
            if (rep.inactive(i, j)) *sink << "inactive\n";
            else *sink << format_number(rep.R_P(i, j), o.digits) << '\n';
        }
    for (Index i = 0; i < theta.order(); ++i)
        for (Index j = 0; j < theta.order(); ++j)
            *sink << "stochastic_form," << i + 1 << ',' << j + 1 << ','
                  << format_number(rep.stochastic_form(i, j), o.digits) << '\n';
    *sink << "stochastic_sum,,," << format_number(rep.stochastic_sum, o.digits) << '\n';
    footer(*sink, 0.0);
    return kOk;
}

inline int report(std::ostream& err, const char* kind, const std::string& message, int code) {
    std::string flat = message;
    for (char& c : flat) {
        if (c == '\n' || c == '\t') c = ' ';
    }
    err << "error\t" << kind << '\t' << flat << '\n';
    return code;
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    Options o;
    CLI::App app{"Matrix-form Poisson count distributions"};
    app.name("phpoisson");
    app.require_subcommand(1);

    auto add_model = [&](CLI::App* s) { s->add_option("--model", o.model, "model JSON file"); };
    auto add_common = [&](CLI::App* s) {
        s->add_option("--out", o.out, "output file (default: standard output)");
        s->add_option("--tol", o.tol, "tolerance for truncated series")->check(CLI::PositiveNumber);
        s->add_option("--digits", o.digits, "significant digits of numeric output")->check(CLI::Range(1, 17));
        s->add_flag("--pretty", o.pretty, "human-readable output");
        s->add_flag("--renormalize", o.renormalize, "scale ph-poisson beta so that beta e^B 1 = 1");
    };

    auto* pmf = app.add_subcommand("pmf", "model -> density CSV");
    add_model(pmf);
    add_common(pmf);
    pmf->add_option("--n-max", o.n_max, "largest n (default: chosen from --tol)");

    auto* mom = app.add_subcommand("moments", "model -> mean, variance, CV and factorial moments");
    add_model(mom);
    add_common(mom);
    mom->add_option("--n-moments", o.n_moments, "number of factorial moments");

    auto* red = app.add_subcommand("reduce", "genab0 model -> model without useless phases");
    add_model(red);
    add_common(red);

    auto* conv = app.add_subcommand("convert", "ph-poisson <-> physical");
    add_model(conv);
    add_common(conv);

    auto* comp = app.add_subcommand("compound", "frequency model + severity CSV -> compound density CSV");
    add_model(comp);
    add_common(comp);
    comp->add_option("--severity", o.severity, "severity CSV (n,f)");
    comp->add_option("--n-max", o.n_max, "largest n (default: mean + 10 sd)");

    auto* sim = app.add_subcommand("simulate", "physical model -> sample CSV");
    add_model(sim);
    add_common(sim);
    sim->add_option("--n-samples", o.n_samples, "number of samples")->check(CLI::PositiveNumber);
    sim->add_option("--seed", o.seed, "random seed");
    sim->add_option("--method", o.method, "rejection or conditioned");
    sim->add_option("--max-rejections", o.max_rejections, "attempts allowed per sample");
    sim->add_option("--threads", o.threads, "worker threads (0: all cores)");
    sim->add_flag("--histogram", o.histogram, "write value,count rows");

    auto* fit_cmd = app.add_subcommand("fit", "sample CSV -> EM trace CSV and fitted model");
    add_common(fit_cmd);
    fit_cmd->add_option("--sample", o.sample, "sample CSV");
    fit_cmd->add_option("--config", o.config, "fit configuration JSON");
    fit_cmd->add_option("--model-out", o.model_out, "fitted physical model JSON");
    fit_cmd->add_option("--max-iter", o.max_iter, "EM iterations");
    fit_cmd->add_option("--phases", o.phases, "order of the default start");
    fit_cmd->add_option("--seed", o.seed, "jitters the default start");

    auto* kkt = app.add_subcommand("kkt", "model + sample -> KKT residual report");
    add_model(kkt);
    add_common(kkt);
    kkt->add_option("--sample", o.sample, "sample CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        return detail::report(err, "parse", e.what(), kParse);
    }
    o.tol_given = fit_cmd->count("--tol") > 0;

    try {
        if (pmf->parsed()) return detail::cmd_pmf(o, out);
        if (mom->parsed()) return detail::cmd_moments(o, out);
        if (red->parsed()) return detail::cmd_reduce(o, out);
        if (conv->parsed()) return detail::cmd_convert(o, out);
        if (comp->parsed()) return detail::cmd_compound(o, out);
        if (sim->parsed()) return detail::cmd_simulate(o, out);
        if (fit_cmd->parsed()) return detail::cmd_fit(o, out);
        if (kkt->parsed()) return detail::cmd_kkt(o, out);
        return detail::report(err, "parse", "no subcommand", kParse);
    } catch (const ParseError& e) {
        return detail::report(err, "parse", e.what(), kParse);
    } catch (const DivergenceError& e) {
        return detail::report(err, "divergence", e.what(), kDivergence);
    } catch (const ValidationError& e) {
        return detail::report(err, "validation", e.what(), kValidation);
    } catch (const DimensionError& e) {
        return detail::report(err, "validation", e.what(), kValidation);
    } catch (const NumericalError& e) {
        return detail::report(err, "numerical", e.what(), kNumerical);
    } catch (const std::exception& e) {
        return detail::report(err, "internal", e.what(), kInternal);
    }
}

}  // namespace phpoisson::cli
