#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "treeloc/cavity.hpp"
#include "treeloc/disorder.hpp"
#include "treeloc/io.hpp"
#include "treeloc/kernel.hpp"
#include "treeloc/rde.hpp"
#include "treeloc/reference.hpp"
#include "treeloc/thresholds.hpp"

namespace treeloc::cli {

// Effective run configuration after merging config file and flags (flags
// win). Unknown keys and out-of-range values are rejected with one message
// per violation.
struct RunConfig {
    std::string command;
    std::string disorder = "uniform";
    std::vector<int> K_values = {2};
    double E = 0.0;
    double s = 1.0;
    std::optional<double> g;
    std::optional<double> t;
    double g_bracket_lo = 0.05;
    double g_bracket_hi = 2.0;
    int g_steps = 11;
    int grid_n = 4000;
    double x_max = 200.0;
    std::vector<long long> pool_sizes;     // per-command default applied late
    std::vector<int> sweeps;
    int seeds = 4;
    double tol = 5e-4;
    double burn_in_frac = 0.1;
    std::string method = "B";
    std::string methods = "A,B,D,E";
    bool with_cavity = false;
    std::uint64_t seed = 2024;
    int threads = 1;
    double z_max = 20.0;
    std::string out;
    std::string dump_kernel;
    bool timing = false;

    std::map<std::string, std::string> effective_dump() const {
        std::map<std::string, std::string> m;
        m["disorder"] = disorder;
        std::string ks;
        for (int k : K_values) ks += (ks.empty() ? "" : ",") + std::to_string(k);
        m["K"] = ks;
        m["E"] = fmt(E);
        m["s"] = fmt(s);
        if (g) m["g"] = fmt(*g);
        if (t) m["t"] = fmt(*t);
        m["g_bracket"] = fmt(g_bracket_lo) + "," + fmt(g_bracket_hi);
        m["g_steps"] = std::to_string(g_steps);
        m["grid_n"] = std::to_string(grid_n);
        m["x_max"] = fmt(x_max);
        std::string ps;
        for (auto p : pool_sizes) ps += (ps.empty() ? "" : ",") + std::to_string(p);
        m["pool_size"] = ps;
        std::string sw;
        for (auto r : sweeps) sw += (sw.empty() ? "" : ",") + std::to_string(r);
        m["sweeps"] = sw;
        m["seeds"] = std::to_string(seeds);
        m["tol"] = fmt(tol);
        m["burn_in_frac"] = fmt(burn_in_frac);
        m["method"] = method;
        m["methods"] = methods;
        m["with_cavity"] = with_cavity ? "1" : "0";
        m["threads"] = std::to_string(threads);
        m["z_max"] = fmt(z_max);
        m["out"] = out;
        return m;
    }
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline bool parse_double(const std::string& s, double& out) {
    try {
        std::size_t pos = 0;
        out = std::stod(s, &pos);
        return pos == s.size();
    } catch (...) { return false; }
}

inline bool parse_int(const std::string& s, long long& out) {
    try {
        std::size_t pos = 0;
        out = std::stoll(s, &pos);
        return pos == s.size();
    } catch (...) { return false; }
}

// "2" or "2..6"
inline bool parse_k_range(const std::string& s, std::vector<int>& out) {
    const auto dots = s.find("..");
    long long a = 0, b = 0;
    if (dots == std::string::npos) {
        if (!parse_int(s, a)) return false;
        out = {static_cast<int>(a)};
        return true;
    }
    if (!parse_int(s.substr(0, dots), a) || !parse_int(s.substr(dots + 2), b) || b < a) return false;
    out.clear();
    for (long long k = a; k <= b; ++k) out.push_back(static_cast<int>(k));
    return true;
}

template <typename T>
inline bool parse_list(const std::string& s, std::vector<T>& out) {
    out.clear();
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        long long v;
        if (!parse_int(item, v)) return false;
        out.push_back(static_cast<T>(v));
    }
    return !out.empty();
}

} // namespace detail

// Merge a flat "key = value" config file (if any) with command-line flags
// (flags win), validate, and return the effective configuration. Throws
// ConfigError listing every violation.
inline RunConfig parse_config(const std::vector<std::string>& argv) {
    std::vector<std::string> errors;
    if (argv.empty()) throw ConfigError("usage: treeloc <command> [--key value ...]\n"
                                        "commands: rde-diag eigen profile cavity threshold table");
    RunConfig cfg;
    cfg.command = argv[0];
    const std::vector<std::string> commands = {"rde-diag", "eigen", "profile",
                                               "cavity", "threshold", "table"};
    if (std::find(commands.begin(), commands.end(), cfg.command) == commands.end())
        throw ConfigError("unknown command: " + cfg.command);

    // collect key/value pairs: config file first, then flags
    std::vector<std::pair<std::string, std::string>> pairs;
    std::string config_path;
    for (std::size_t i = 1; i < argv.size(); ++i) {
        if (argv[i] == "--config") {
            if (i + 1 >= argv.size()) { errors.push_back("--config: missing path"); break; }
            config_path = argv[++i];
        }
    }
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) {
            errors.push_back("cannot open config file: " + config_path);
        } else {
            std::string line;
            while (std::getline(in, line)) {
                const auto hash = line.find('#');
                if (hash != std::string::npos) line = line.substr(0, hash);
                const auto eq = line.find('=');
                if (eq == std::string::npos) continue;
                auto trim = [](std::string v) {
                    const auto b = v.find_first_not_of(" \t");
                    const auto e = v.find_last_not_of(" \t");
                    return (b == std::string::npos) ? std::string() : v.substr(b, e - b + 1);
                };
                const std::string key = trim(line.substr(0, eq));
                const std::string val = trim(line.substr(eq + 1));
                if (!key.empty()) pairs.push_back({key, val});
            }
        }
    }
    const std::vector<std::string> bool_flags = {"with_cavity", "timing"};
    for (std::size_t i = 1; i < argv.size(); ++i) {
        std::string key = argv[i];
        if (key.rfind("--", 0) != 0) { errors.push_back("stray argument: " + key); continue; }
        key = key.substr(2);
        std::replace(key.begin(), key.end(), '-', '_');
        if (key == "config") { ++i; continue; }
        if (std::find(bool_flags.begin(), bool_flags.end(), key) != bool_flags.end()) {
            pairs.push_back({key, "1"});
            continue;
        }
        if (i + 1 >= argv.size()) { errors.push_back("--" + key + ": missing value"); break; }
        pairs.push_back({key, argv[++i]});
    }

    bool pool_given = false, sweeps_given = false;
    for (const auto& [key, val] : pairs) {
        auto bad = [&](const std::string& why) { errors.push_back("--" + key + " " + val + ": " + why); };
        double dv;
        long long iv;
        if (key == "disorder") {
            if (val != "uniform" && val != "cauchy" && val.rfind("file:", 0) != 0)
                bad("must be uniform, cauchy, or file:<path>");
            else cfg.disorder = val;
        } else if (key == "K") {
            std::vector<int> ks;
            if (!detail::parse_k_range(val, ks)) bad("must be an integer or a..b");
            else {
                bool ok = true;
                for (int k : ks) if (k < 2) { bad("K must be >= 2"); ok = false; break; }
                if (ok) cfg.K_values = ks;
            }
        } else if (key == "E") {
            if (!detail::parse_double(val, dv)) bad("must be a real number"); else cfg.E = dv;
        } else if (key == "s") {
            if (!detail::parse_double(val, dv) || !(dv > 0.0 && dv <= 2.0)) bad("s must lie in (0,2]");
            else cfg.s = dv;
        } else if (key == "g") {
            if (!detail::parse_double(val, dv) || !(dv > 0.0)) bad("g must be > 0"); else cfg.g = dv;
        } else if (key == "t") {
            if (!detail::parse_double(val, dv) || !(dv > 0.0)) bad("t must be > 0"); else cfg.t = dv;
        } else if (key == "g_bracket") {
            const auto comma = val.find(',');
            double lo, hi;
            if (comma == std::string::npos || !detail::parse_double(val.substr(0, comma), lo) ||
                !detail::parse_double(val.substr(comma + 1), hi) || !(0.0 < lo && lo < hi))
                bad("must be lo,hi with 0 < lo < hi");
            else { cfg.g_bracket_lo = lo; cfg.g_bracket_hi = hi; }
        } else if (key == "g_steps") {
            if (!detail::parse_int(val, iv) || iv < 2) bad("must be an integer >= 2");
            else cfg.g_steps = static_cast<int>(iv);
        } else if (key == "grid_n") {
            if (!detail::parse_int(val, iv) || iv < 64) bad("must be an integer >= 64");
            else cfg.grid_n = static_cast<int>(iv);
        } else if (key == "x_max") {
            if (!detail::parse_double(val, dv) || !(dv > 0.0)) bad("must be > 0"); else cfg.x_max = dv;
        } else if (key == "z_max") {
            if (!detail::parse_double(val, dv) || !(dv > 1.0)) bad("must be > 1"); else cfg.z_max = dv;
        } else if (key == "pool_size") {
            std::vector<long long> ps;
            if (!detail::parse_list(val, ps)) bad("must be a comma list of integers");
            else {
                bool ok = true;
                for (auto p : ps) if (p < 1000) { bad("pool sizes must be >= 1000"); ok = false; break; }
                if (ok) { cfg.pool_sizes = ps; pool_given = true; }
            }
        } else if (key == "sweeps") {
            std::vector<int> sw;
            if (!detail::parse_list(val, sw)) bad("must be a comma list of integers");
            else {
                bool ok = true;
                for (auto r : sw) if (r < 10) { bad("sweep counts must be >= 10"); ok = false; break; }
                if (ok) { cfg.sweeps = sw; sweeps_given = true; }
            }
        } else if (key == "seeds") {
            if (!detail::parse_int(val, iv) || iv < 1) bad("must be an integer >= 1");
            else cfg.seeds = static_cast<int>(iv);
        } else if (key == "tol") {
            if (!detail::parse_double(val, dv) || !(dv > 0.0)) bad("must be > 0"); else cfg.tol = dv;
        } else if (key == "burn_in_frac") {
            if (!detail::parse_double(val, dv) || !(dv >= 0.0 && dv < 0.9)) bad("must lie in [0,0.9)");
            else cfg.burn_in_frac = dv;
        } else if (key == "method") {
            if (val != "A" && val != "B" && val != "C" && val != "D" && val != "E")
                bad("must be one of A B C D E");
            else cfg.method = val;
        } else if (key == "methods") {
            std::stringstream ss(val);
            std::string item;
            bool ok = true;
            while (std::getline(ss, item, ','))
                if (item != "A" && item != "B" && item != "C" && item != "D" && item != "E") ok = false;
            if (!ok) bad("must be a comma list of A B C D E");
            else cfg.methods = val;
        } else if (key == "with_cavity") {
            cfg.with_cavity = (val == "1" || val == "true");
        } else if (key == "timing") {
            cfg.timing = (val == "1" || val == "true");
        } else if (key == "seed") {
            if (!detail::parse_int(val, iv) || iv < 0) bad("must be a nonnegative integer");
            else cfg.seed = static_cast<std::uint64_t>(iv);
        } else if (key == "threads") {
            if (!detail::parse_int(val, iv) || iv < 1 || iv > 256) bad("must lie in [1,256]");
            else cfg.threads = static_cast<int>(iv);
        } else if (key == "out") {
            cfg.out = val;
        } else if (key == "dump_kernel") {
            cfg.dump_kernel = val;
        } else {
            errors.push_back("unknown key: --" + key);
        }
    }

    if (!pool_given)
        cfg.pool_sizes = (cfg.command == "threshold" && cfg.method == "C")
                             ? std::vector<long long>{10000, 30000, 100000}
                             : std::vector<long long>{200000};
    if (!sweeps_given)
        cfg.sweeps = (cfg.command == "threshold" && cfg.method == "C")
                         ? std::vector<int>{1000, 3000}
                         : std::vector<int>{3000};
    if (cfg.out.empty()) cfg.out = cfg.command + ".csv";
    if ((cfg.command == "profile" || cfg.command == "eigen" || cfg.command == "cavity" ||
         cfg.command == "rde-diag") && !cfg.g && !cfg.t) {
        if (cfg.command == "profile" || cfg.command == "rde-diag")
            errors.push_back("command " + cfg.command + " requires --g or --t");
    }
    if (!errors.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw ConfigError(msg);
    }
    return cfg;
}

namespace detail {

inline DisorderDensity make_disorder(const RunConfig& cfg) {
    if (cfg.disorder == "uniform") return DisorderDensity::uniform(1.0);
    if (cfg.disorder == "cauchy") return DisorderDensity::cauchy(1.0);
    return DisorderDensity::tabulated_from_file(cfg.disorder.substr(5));
}

inline ModelParams params_for(const RunConfig& cfg, int K, double s) {
    if (cfg.t) return ModelParams::from_t(K, *cfg.t, cfg.E, s);
    if (cfg.g) return ModelParams::from_g(K, *cfg.g, cfg.E, s);
    throw ConfigError("this command requires --g or --t");
}

inline EigenThresholdOptions eigen_opts(const RunConfig& cfg) {
    EigenThresholdOptions o;
    o.grid_n = cfg.grid_n;
    o.x_max = cfg.x_max;
    o.bracket_lo = cfg.g_bracket_lo;
    o.bracket_hi = cfg.g_bracket_hi;
    o.g_tol = cfg.tol;
    o.pool_size = static_cast<std::size_t>(cfg.pool_sizes.front());
    o.eff_grid.z_max = cfg.z_max;
    o.seed = cfg.seed;
    o.threads = cfg.threads;
    return o;
}

inline CavityThresholdOptions cavity_opts(const RunConfig& cfg) {
    CavityThresholdOptions o;
    o.pool_sizes.clear();
    for (auto p : cfg.pool_sizes) o.pool_sizes.push_back(static_cast<std::size_t>(p));
    o.sweep_lengths = cfg.sweeps;
    o.n_seeds = cfg.seeds;
    o.burn_frac = cfg.burn_in_frac;
    o.bracket_lo = cfg.g_bracket_lo;
    o.bracket_hi = cfg.g_bracket_hi;
    o.seed = cfg.seed;
    o.threads = cfg.threads;
    return o;
}

inline ThresholdResult run_method(Method m, const DisorderDensity& d, int K, const RunConfig& cfg) {
    switch (m) {
        case Method::A:
        case Method::B:
            return threshold_eigen(m, d, K, cfg.E, eigen_opts(cfg));
        case Method::C:
            return threshold_cavity(d, K, cfg.E, cavity_opts(cfg));
        case Method::D: {
            ThresholdResult r;
            r.method = Method::D; r.K = K; r.E = cfg.E;
            r.g_c = gc_formula_D(d, K, cfg.E);
            if (r.g_c) r.t_c = *r.g_c / (K * std::log(static_cast<double>(K)));
            return r;
        }
        case Method::E: {
            ThresholdResult r;
            r.method = Method::E; r.K = K; r.E = cfg.E;
            if (cfg.E != 0.0)
                throw std::invalid_argument("method E is defined at E = 0 only");
            r.g_c = gc_formula_E(d, K);
            if (r.g_c) r.t_c = *r.g_c / (K * std::log(static_cast<double>(K)));
            return r;
        }
        default:
            throw std::invalid_argument("unsupported method");
    }
}

inline Method method_from_string(const std::string& s) {
    if (s == "A") return Method::A;
    if (s == "B") return Method::B;
    if (s == "C") return Method::C;
    if (s == "D") return Method::D;
    if (s == "E") return Method::E;
    throw ConfigError("unknown method: " + s);
}

inline std::string conversion_value(const DisorderDensity& d, const ThresholdResult& r) {
    if (!r.g_c) return "";
    if (d.kind() == DisorderKind::uniform) return fmt(uniform_w_c(*r.g_c, r.K));
    if (d.kind() == DisorderKind::cauchy) return fmt(cauchy_gamma_c(*r.g_c, r.K));
    return "";
}

} // namespace detail

// Executes the configured command; artifacts land on disk at cfg.out.
// Returns the process exit code.
inline int run(const RunConfig& cfg) {
    const auto wall_start = std::chrono::steady_clock::now();
    DisorderDensity d = detail::make_disorder(cfg);
    std::ostringstream body;
    bool ok = true;

    try {
        if (cfg.command == "threshold") {
            body << "method,disorder,K,E,g_c,t_c,uncertainty,W_c_or_gamma_c,diagnostics_json\n";
            const Method m = detail::method_from_string(cfg.method);
            for (int K : cfg.K_values) {
                const ThresholdResult r = detail::run_method(m, d, K, cfg);
                body << method_name(r.method) << "," << cfg.disorder << "," << K << "," << fmt(cfg.E)
                     << "," << (r.g_c ? fmt(*r.g_c) : "") << "," << (r.g_c ? fmt(r.t_c) : "") << ","
                     << fmt(r.uncertainty) << "," << detail::conversion_value(d, r) << ","
                     << diagnostics_json_field(r.diagnostics) << "\n";
            }
        } else if (cfg.command == "table") {
            body << "disorder,K,method,g_c,uncertainty,reference,abs_diff,tolerance,status\n";
            std::vector<std::string> methods;
            std::stringstream ss(cfg.methods);
            std::string item;
            while (std::getline(ss, item, ',')) methods.push_back(item);
            if (cfg.with_cavity &&
                std::find(methods.begin(), methods.end(), "C") == methods.end())
                methods.push_back("C");
            bool all_pass = true;
            for (int K : cfg.K_values) {
                for (const auto& ms : methods) {
                    const Method m = detail::method_from_string(ms);
                    const ThresholdResult r = detail::run_method(m, d, K, cfg);
                    const ReferenceCell* ref = find_reference(d.kind(), K, m);
                    std::string status, refs, diff, tols;
                    if (ref) {
                        tols = fmt(ref->tolerance);
                        if (ref->g_c && r.g_c) {
                            refs = fmt(*ref->g_c);
                            const double delta = std::abs(*r.g_c - *ref->g_c);
                            diff = fmt(delta);
                            status = (delta <= ref->tolerance) ? "PASS" : "FAIL";
                        } else if (!ref->g_c && !r.g_c) {
                            refs = "absent";
                            status = "PASS";
                        } else {
                            refs = ref->g_c ? fmt(*ref->g_c) : "absent";
                            status = "FAIL";
                        }
                        if (status == "FAIL") all_pass = false;
                    } else {
                        status = "INFO";
                    }
                    body << cfg.disorder << "," << K << "," << ms << ","
                         << (r.g_c ? fmt(*r.g_c) : "absent") << "," << fmt(r.uncertainty) << ","
                         << refs << "," << diff << "," << tols << "," << status << "\n";
                }
            }
            ok = all_pass;
        } else if (cfg.command == "eigen") {
            body << "K,g,lambda,iterations,residual\n";
            if (cfg.method != "A" && cfg.method != "B")
                throw ConfigError("eigen: --method must be A or B");
            const Method m = detail::method_from_string(cfg.method);
            const EigenThresholdOptions opts = detail::eigen_opts(cfg);
            for (int K : cfg.K_values) {
                std::vector<double> gs;
                if (cfg.g) gs.push_back(*cfg.g);
                else if (cfg.t) gs.push_back(ModelParams::from_t(K, *cfg.t, cfg.E, 1.0).g);
                else
                    for (int i = 0; i < cfg.g_steps; ++i)
                        gs.push_back(cfg.g_bracket_lo + (cfg.g_bracket_hi - cfg.g_bracket_lo) * i /
                                                          (cfg.g_steps - 1));
                for (double g : gs) {
                    const ModelParams params = ModelParams::from_g(K, g, cfg.E, 1.0);
                    const KernelGrid grid = build_grid(1e-6 * params.t * params.t, cfg.x_max, cfg.grid_n);
                    DensitySource source = DensitySource::bare(d);
                    if (m == Method::B) {
                        if (d.kind() == DisorderKind::cauchy)
                            source = DensitySource::cauchy_closed(
                                cauchy_fixed_point(params, d.cauchy_scale()).effective);
                        else {
                            ResolventPool pool = converge_pool(d, params, opts.pool_size,
                                                               mix_key(cfg.seed, K, 0xe1), nullptr,
                                                               opts.pool_max_sweeps, cfg.threads);
                            source = DensitySource::effective(treeloc::detail::effective_density_adaptive(
                                pool, d, params, EffectiveGridSpec{cfg.z_max}, cfg.threads));
                        }
                    }
                    DiscreteKernel kern = assemble_kernel(std::move(source), params, grid);
                    if (!cfg.dump_kernel.empty()) write_kernel_binary(cfg.dump_kernel, kern);
                    const EigenResult res = leading_eigen(kern, 1e-10, 500, cfg.threads);
                    if (!res.converged) ok = false;
                    body << K << "," << fmt(g) << "," << fmt(res.lambda) << "," << res.iterations
                         << "," << fmt(res.residual) << "\n";
                }
            }
        } else if (cfg.command == "profile") {
            const int K = cfg.K_values.front();
            const ModelParams params = detail::params_for(cfg, K, 1.0);
            const KernelGrid grid = build_grid(1e-6 * params.t * params.t, cfg.x_max, cfg.grid_n);
            DensitySource source = DensitySource::bare(d);
            if (cfg.method == "B") {
                if (d.kind() == DisorderKind::cauchy)
                    source = DensitySource::cauchy_closed(
                        cauchy_fixed_point(params, d.cauchy_scale()).effective);
                else {
                    ResolventPool pool =
                        converge_pool(d, params, static_cast<std::size_t>(cfg.pool_sizes.front()),
                                      mix_key(cfg.seed, 0x9f11ull), nullptr, 500, cfg.threads);
                    source = DensitySource::effective(treeloc::detail::effective_density_adaptive(
                        pool, d, params, EffectiveGridSpec{cfg.z_max}, cfg.threads));
                }
            }
            const DiscreteKernel kern = assemble_kernel(std::move(source), params, grid);
            const EigenResult res = leading_eigen(kern, 1e-10, 500, cfg.threads);
            if (!res.converged) throw std::runtime_error("profile: eigensolve did not converge");
            body << "# lambda = " << fmt(res.lambda) << "\n";
            std::ostringstream prof;
            write_profile(prof, eigenvector_profile(res, grid));
            body << prof.str();
        } else if (cfg.command == "cavity") {
            body << "section,K,pool_size,seed_index,sweep_index,value\n";
            const int K = cfg.K_values.front();
            const ModelParams params = detail::params_for(cfg, K, cfg.s);
            const int R = *std::max_element(cfg.sweeps.begin(), cfg.sweeps.end());
            std::vector<std::pair<double, double>> phi_by_n;
            for (auto Np : cfg.pool_sizes) {
                const std::size_t N = static_cast<std::size_t>(Np);
                std::vector<std::vector<double>> increments;
                for (int k = 0; k < cfg.seeds; ++k) {
                    const FreeEnergyRun run = free_energy_run(
                        d, params, N, R, mix_key(cfg.seed, k, N), cfg.burn_in_frac, cfg.threads);
                    for (int r = 0; r < run.sweeps; ++r)
                        body << "trace," << K << "," << N << "," << k << "," << (r + 1) << ","
                             << fmt(run.increments[r]) << "\n";
                    increments.push_back(run.increments);
                }
                // seed-averaged phi at the requested checkpoints, then 1/R fit
                std::vector<std::pair<double, double>> phi_r;
                for (int Rp : cfg.sweeps) {
                    double acc = 0.0;
                    for (const auto& inc : increments)
                        acc += phi_from_increments(inc, Rp, K, cfg.burn_in_frac);
                    phi_r.push_back({static_cast<double>(Rp), acc / cfg.seeds});
                }
                if (phi_r.size() >= 3) {
                    const ScalingFit f = fit_R(phi_r);
                    body << "fit_R," << K << "," << N << ",,," << fmt(f.phi_inf) << "\n";
                    phi_by_n.push_back({static_cast<double>(N), f.phi_inf});
                } else {
                    phi_by_n.push_back({static_cast<double>(N), phi_r.back().second});
                }
            }
            if (phi_by_n.size() >= 4) {
                const ScalingFit f = fit_N(phi_by_n);
                body << "fit_N," << K << ",,,," << fmt(f.phi_inf) << "\n";
            } else if (phi_by_n.size() >= 2) {
                const ScalingFit f = fit_N_reduced(phi_by_n);
                body << "fit_N_reduced," << K << ",,,," << fmt(f.phi_inf) << "\n";
            }
        } else if (cfg.command == "rde-diag") {
            body << "section,a,b,c,d\n";
            const int K = cfg.K_values.front();
            const ModelParams params = detail::params_for(cfg, K, 1.0);
            PoolConvergence conv;
            const ResolventPool pool =
                converge_pool(d, params, static_cast<std::size_t>(cfg.pool_sizes.front()),
                              cfg.seed, &conv, 500, cfg.threads);
            body << "convergence," << conv.sweeps << "," << fmt(conv.last_ks) << ","
                 << (conv.converged ? 1 : 0) << ",\n";
            // histogram over [-5, 5], 100 bins
            const int nb = 100;
            std::vector<long long> hist(nb, 0);
            for (double v : pool.samples) {
                if (v < -5.0 || v >= 5.0) continue;
                hist[static_cast<int>((v + 5.0) / 10.0 * nb)]++;
            }
            for (int b = 0; b < nb; ++b)
                body << "histogram," << fmt(-5.0 + (b + 0.5) * 10.0 / nb) << "," << hist[b] << ",,\n";
            // appendix quadratic-tail bound per side: P(Gamma > x) <= ||rho||_inf / x
            std::vector<double> sorted = pool.samples;
            std::sort(sorted.begin(), sorted.end());
            const double n = static_cast<double>(sorted.size());
            bool bound_ok = true;
            for (double x : {1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0}) {
                const double p_hi = static_cast<double>(
                    sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), x)) / n;
                const double p_lo = static_cast<double>(
                    std::lower_bound(sorted.begin(), sorted.end(), -x) - sorted.begin()) / n;
                const double bound = d.sup_norm() / x;
                const double se = std::sqrt(std::fmax(p_hi, p_lo) / n) + 1e-12;
                const bool pass = p_hi <= bound + 3.0 * se && p_lo <= bound + 3.0 * se;
                bound_ok = bound_ok && pass;
                body << "survival," << fmt(x) << "," << fmt(std::fmax(p_hi, p_lo)) << ","
                     << fmt(bound) << "," << (pass ? 1 : 0) << "\n";
            }
            ok = ok && bound_ok;
            // effective density section
            const EffectiveGridSpec spec{cfg.z_max};
            EffectiveDensity eff =
                treeloc::detail::effective_density_adaptive(pool, d, params, spec, cfg.threads);
            body << "tail," << fmt(eff.tail_amp) << "," << fmt(eff.tail_exp) << ",,\n";
            for (std::size_t i = 0; i < eff.grid.size(); i += 8)
                body << "effective," << fmt(eff.grid[i]) << "," << fmt(eff.values[i]) << ",,\n";
        } else {
            throw ConfigError("unknown command: " + cfg.command);
        }
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        std::ofstream out(cfg.out);
        write_file_header(out, cfg.command, cfg.effective_dump(), cfg.seed);
        out << body.str();
        out << "# INCOMPLETE\n";
        return 1;
    }

    std::ofstream out(cfg.out);
    if (!out) {
        std::cerr << "error: cannot open output file " << cfg.out << "\n";
        return 1;
    }
    write_file_header(out, cfg.command, cfg.effective_dump(), cfg.seed);
    if (cfg.timing) {
        const auto dt = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - wall_start).count();
        out << "# wall_clock_ms = " << dt << "\n";
    }
    out << body.str();
    return ok ? 0 : 1;
}

inline int main_entry(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        const RunConfig cfg = parse_config(args);
        return run(cfg);
    } catch (const ConfigError& ex) {
        std::cerr << ex.what() << "\n";
        return 2;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
}

} // namespace treeloc::cli
