#include "plateplast/io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "plateplast/errors.hpp"

namespace plateplast {

namespace {

using Inputs = std::vector<std::string>;
using Violations = std::vector<std::string>;

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    errno = 0;
    out = std::strtod(s.c_str(), &end);
    return errno == 0 && end == s.c_str() + s.size();
}

bool parse_int(const std::string& s, int& out) {
    double d;
    if (!parse_double(s, d) || d != std::floor(d) || std::abs(d) > 1e9) return false;
    out = static_cast<int>(d);
    return true;
}

struct Reader {
    Violations& bad;
    std::string key;

    bool one(const Inputs& in) {
        if (in.size() == 1) return true;
        bad.push_back(key + ": expected a single value");
        return false;
    }
    void real(const Inputs& in, double& out) {
        if (one(in) && !parse_double(in[0], out)) bad.push_back(key + ": not a number: " + in[0]);
    }
    void integer(const Inputs& in, int& out) {
        if (one(in) && !parse_int(in[0], out)) bad.push_back(key + ": not an integer: " + in[0]);
    }
    void reals(const Inputs& in, std::vector<double>& out) {
        out.clear();
        for (const auto& s : in) {
            double d;
            if (!parse_double(s, d)) {
                bad.push_back(key + ": not a number: " + s);
                return;
            }
            out.push_back(d);
        }
    }
    void poly(const Inputs& in, Poly2& p) {
        std::vector<double> v;
        reals(in, v);
        if (v.size() != p.c.size()) {
            bad.push_back(key + ": expected 10 coefficients (1 x y x2 xy y2 x3 x2y xy2 y3)");
            return;
        }
        std::copy(v.begin(), v.end(), p.c.begin());
    }
};

using Handler = std::function<void(Reader&, const Inputs&, ProblemConfig&)>;

const std::map<std::string, Handler>& handlers() {
    static const std::map<std::string, Handler> h = {
        {"domain.nx", [](Reader& r, const Inputs& in, ProblemConfig& c) { r.integer(in, c.nx); }},
        {"domain.ny", [](Reader& r, const Inputs& in, ProblemConfig& c) { r.integer(in, c.ny); }},
        {"domain.lx", [](Reader& r, const Inputs& in, ProblemConfig& c) { r.real(in, c.lx); }},
        {"domain.ly", [](Reader& r, const Inputs& in, ProblemConfig& c) { r.real(in, c.ly); }},
        {"domain.n_x3", [](Reader& r, const Inputs& in, ProblemConfig& c) { r.integer(in, c.n_x3); }},
        {"domain.nz", [](Reader& r, const Inputs& in, ProblemConfig& c) { r.integer(in, c.nz); }},
        {"domain.gamma_d",
         [](Reader& r, const Inputs& in, ProblemConfig& c) {
             c.gamma_d.clear();
             for (const auto& s : in) {
                 if (s.empty()) continue;
                 try {
                     c.gamma_d.push_back(edge_from_string(s));
                 } catch (const ConfigError&) {
                     r.bad.push_back(r.key + ": unknown edge '" + s + "' (left, right, bottom, top)");
                 }
             }
         }},
        {"material.lambda", [](Reader& r, const Inputs& in, ProblemConfig& c) { r.real(in, c.lambda); }},
        {"material.mu", [](Reader& r, const Inputs& in, ProblemConfig& c) { r.real(in, c.mu); }},
        {"material.k_hard", [](Reader& r, const Inputs& in, ProblemConfig& c) { r.real(in, c.k_hard); }},
        {"material.sigma_y", [](Reader& r, const Inputs& in, ProblemConfig& c) { r.real(in, c.sigma_y); }},
        {"material.rho_K", [](Reader& r, const Inputs& in, ProblemConfig& c) { r.real(in, c.rho_K); }},
        {"model.alpha", [](Reader& r, const Inputs& in, ProblemConfig& c) { r.real(in, c.alpha); }},
        {"bc.u0x", [](Reader& r, const Inputs& in, ProblemConfig& c) { r.poly(in, c.u0x); }},
        {"bc.u0y", [](Reader& r, const Inputs& in, ProblemConfig& c) { r.poly(in, c.u0y); }},
        {"bc.v0", [](Reader& r, const Inputs& in, ProblemConfig& c) { r.poly(in, c.v0); }},
        {"p0.preset",
         [](Reader& r, const Inputs& in, ProblemConfig& c) {
             if (!r.one(in)) return;
             if (in[0] != "zero" && in[0] != "constant" && in[0] != "linear_x3")
                 r.bad.push_back(r.key + ": expected zero, constant or linear_x3");
             else
                 c.p0_preset = in[0];
         }},
        {"p0.coeffs",
         [](Reader& r, const Inputs& in, ProblemConfig& c) {
             std::vector<double> v;
             r.reals(in, v);
             if (v.size() != 5)
                 r.bad.push_back(r.key + ": expected 5 deviatoric coordinates");
             else
                 c.p0_coeffs = SymDev3(v[0], v[1], v[2], v[3], v[4]);
         }},
        {"solver.tol", [](Reader& r, const Inputs& in, ProblemConfig& c) { r.real(in, c.solver.tol); }},
        {"solver.cg_tol", [](Reader& r, const Inputs& in, ProblemConfig& c) { r.real(in, c.solver.cg_tol); }},
        {"solver.max_outer", [](Reader& r, const Inputs& in, ProblemConfig& c) { r.integer(in, c.solver.max_outer); }},
        {"solver.n_restarts", [](Reader& r, const Inputs& in, ProblemConfig& c) { r.integer(in, c.solver.n_restarts); }},
        {"solver.grad_tol", [](Reader& r, const Inputs& in, ProblemConfig& c) { r.real(in, c.solver.grad_tol); }},
        {"solver.max_vk_iters",
         [](Reader& r, const Inputs& in, ProblemConfig& c) { r.integer(in, c.solver.max_vk_iters); }},
        {"solver.restart_amplitude",
         [](Reader& r, const Inputs& in, ProblemConfig& c) { r.real(in, c.solver.restart_amplitude); }},
        {"solver.seed",
         [](Reader& r, const Inputs& in, ProblemConfig& c) {
             int s = 0;
             r.integer(in, s);
             if (s < 0) r.bad.push_back(r.key + ": must be nonnegative");
             c.solver.seed = static_cast<std::uint64_t>(std::max(s, 0));
         }},
        {"study.eps", [](Reader& r, const Inputs& in, ProblemConfig& c) { r.reals(in, c.eps); }},
    };
    return h;
}

void validate(const ProblemConfig& c, Violations& bad) {
    if (c.nx < 3 || c.ny < 3) bad.push_back("domain: nx and ny must be at least 3");
    if (!(c.lx > 0.0) || !(c.ly > 0.0)) bad.push_back("domain: lx and ly must be positive");
    if (c.gamma_d.empty())
        bad.push_back("domain.gamma_d: the clamped boundary must have positive length (H^1(gamma_d) > 0)");
    if (c.n_x3 < 2) bad.push_back("domain.n_x3: at least 2 Gauss points are needed");
    if (c.nz < 3 || c.nz % 2 == 0) bad.push_back("domain.nz: must be odd and at least 3");
    if (!(c.alpha >= 3.0)) bad.push_back("model.alpha: the scaling requires alpha >= 3");
    if (!(c.mu > 0.0) || !(3.0 * c.lambda + 2.0 * c.mu > 0.0))
        bad.push_back("material: need mu > 0 and 3 lambda + 2 mu > 0");
    try {
        MaterialParams{c.k_hard, c.sigma_y, c.rho_K}.validate();
    } catch (const Error& e) {
        bad.push_back(std::string("material: ") + e.what());
    }
    const auto& s = c.solver;
    if (!(s.tol > 0) || !(s.cg_tol > 0) || !(s.grad_tol > 0))
        bad.push_back("solver: tolerances must be positive");
    if (s.max_outer < 1 || s.max_vk_iters < 1) bad.push_back("solver: iteration limits must be positive");
    if (s.n_restarts < 0) bad.push_back("solver.n_restarts: must be nonnegative");
    if (!(s.restart_amplitude >= 0)) bad.push_back("solver.restart_amplitude: must be nonnegative");
    if (c.eps.empty()) bad.push_back("study.eps: empty list");
    for (std::size_t i = 0; i < c.eps.size(); ++i) {
        if (!(c.eps[i] > 0)) bad.push_back("study.eps: values must be positive");
        if (i > 0 && !(c.eps[i] < c.eps[i - 1])) bad.push_back("study.eps: values must be strictly decreasing");
    }
}

nlohmann::json poly_json(const Poly2& p) {
    nlohmann::json a = nlohmann::json::array();
    for (double x : p.c) a.push_back(num(x));
    return a;
}

nlohmann::json coords_json(const SymDev3& p) {
    nlohmann::json a = nlohmann::json::array();
    for (int i = 0; i < 5; ++i) a.push_back(num(p[i]));
    return a;
}

std::string format17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace

nlohmann::json ProblemConfig::to_json() const {
    nlohmann::json edges = nlohmann::json::array();
    for (auto e : gamma_d) edges.push_back(to_string(e));
    nlohmann::json eps_j = nlohmann::json::array();
    for (double e : eps) eps_j.push_back(num(e));
    return {
        {"domain", {{"nx", nx}, {"ny", ny}, {"lx", num(lx)}, {"ly", num(ly)}, {"gamma_d", edges}, {"n_x3", n_x3}, {"nz", nz}}},
        {"material",
         {{"lambda", num(lambda)}, {"mu", num(mu)}, {"k_hard", num(k_hard)}, {"sigma_y", num(sigma_y)}, {"rho_K", num(rho_K)}}},
        {"model", {{"alpha", num(alpha)}}},
        {"bc", {{"u0x", poly_json(u0x)}, {"u0y", poly_json(u0y)}, {"v0", poly_json(v0)}}},
        {"p0", {{"preset", p0_preset}, {"coeffs", coords_json(p0_coeffs)}}},
        {"solver",
         {{"tol", num(solver.tol)},
          {"cg_tol", num(solver.cg_tol)},
          {"max_outer", solver.max_outer},
          {"n_restarts", solver.n_restarts},
          {"grad_tol", num(solver.grad_tol)},
          {"max_vk_iters", solver.max_vk_iters},
          {"restart_amplitude", num(solver.restart_amplitude)},
          {"seed", solver.seed}}},
        {"study", {{"eps", eps_j}}},
    };
}

ProblemConfig parse_config(const std::string& text) {
    std::istringstream in(text);
    CLI::ConfigINI ini;
    ini.comment('#');
    std::vector<CLI::ConfigItem> items;
    try {
        items = ini.from_config(in);
    } catch (const CLI::Error& e) {
        throw ConfigError({std::string("malformed configuration: ") + e.what()});
    }
    ProblemConfig cfg;
    Violations bad;
    const auto& h = handlers();
    for (const auto& it : items) {
        if (it.name == "++" || it.name == "--") continue;
        const std::string key = it.fullname();
        const auto f = h.find(key);
        if (f == h.end()) {
            bad.push_back("unknown key '" + key + "'");
            continue;
        }
        Reader r{bad, key};
        f->second(r, it.inputs, cfg);
    }
    validate(cfg, bad);
    if (!bad.empty()) throw ConfigError(bad);
    return cfg;
}

ProblemConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

PlateModel build_model(const ProblemConfig& cfg) {
    BoundaryData bc{cfg.u0x, cfg.u0y, cfg.v0};
    return PlateModel(PlateGrid(cfg.nx, cfg.ny, cfg.lx, cfg.ly, cfg.gamma_d, cfg.n_x3), bc,
                      make_isotropic(cfg.lambda, cfg.mu), MaterialParams{cfg.k_hard, cfg.sigma_y, cfg.rho_K},
                      DissipationSpec::von_mises(cfg.sigma_y));
}

Grid3D build_grid3d(const ProblemConfig& cfg) {
    return Grid3D(PlateGrid(cfg.nx, cfg.ny, cfg.lx, cfg.ly, cfg.gamma_d, cfg.n_x3), cfg.nz);
}

std::vector<SymDev3> build_p0(const ProblemConfig& cfg, const PlateGrid& grid) {
    const int nq = grid.n_x3();
    std::vector<SymDev3> p0(static_cast<std::size_t>(grid.n_nodes()) * nq);
    if (cfg.p0_preset == "zero") return p0;
    for (int n = 0; n < grid.n_nodes(); ++n)
        for (int q = 0; q < nq; ++q)
            p0[n * nq + q] = cfg.p0_preset == "constant" ? cfg.p0_coeffs : grid.x3_quad().x[q] * cfg.p0_coeffs;
    return p0;
}

SolveReport solve_limit(const PlateModel& model, const ProblemConfig& cfg, DisplacementState& st, PlasticField& pf) {
    st = model.boundary_extension();
    pf = model.make_plastic_field();
    pf.p0 = build_p0(cfg, model.grid());
    pf.p = pf.p0;
    return cfg.alpha > 3.0 ? minimize_linear(model, cfg.alpha, st, pf, cfg.solver)
                           : minimize_vk(model, st, pf, cfg.solver);
}

nlohmann::json num(double x) {
    if (std::isfinite(x)) return x;
    if (std::isnan(x)) return "nan";
    return x > 0 ? "inf" : "-inf";
}

double from_num(const nlohmann::json& j) {
    if (j.is_number()) return j.get<double>();
    const auto s = j.get<std::string>();
    if (s == "inf") return kInfinity;
    if (s == "-inf") return -kInfinity;
    return std::nan("");
}

nlohmann::json to_json(const EnergyBreakdown& e) {
    return {{"elastic", num(e.elastic_2d)}, {"hardening", num(e.hardening)}, {"dissipation", num(e.dissipation)},
            {"total", num(e.total)}};
}

nlohmann::json to_json(const SolveReport& r) {
    nlohmann::json trace = nlohmann::json::array(), restarts = nlohmann::json::array();
    for (double x : r.energy_trace) trace.push_back(num(x));
    for (double x : r.restart_energies) restarts.push_back(num(x));
    return {{"converged", r.converged},
            {"flagged", r.flagged},
            {"iterations", r.iterations},
            {"energy", to_json(r.energy)},
            {"energy_trace", trace},
            {"cg_iterations", r.cg_iterations},
            {"max_cg_residual", num(r.max_cg_residual)},
            {"max_prox_residual", num(r.max_prox_residual)},
            {"monotone_violations", r.monotone_violations},
            {"terminal_improvement", num(r.terminal_improvement)},
            {"grad_norm", num(r.grad_norm)},
            {"line_search_failures", r.line_search_failures},
            {"restart_energies", restarts}};
}

nlohmann::json to_json(const ReductionReport& r) {
    return {{"min_full", num(r.min_full)},
            {"min_reduced", num(r.min_reduced)},
            {"rel_gap", num(r.rel_gap)},
            {"v_inf", num(r.v_inf)},
            {"x3_variation", num(r.x3_variation)},
            {"jensen_lhs", num(r.jensen_lhs)},
            {"jensen_rhs", num(r.jensen_rhs)},
            {"jensen_holds", r.jensen_holds},
            {"linear_profile_correlation", num(r.linear_profile_correlation)},
            {"full", to_json(r.full)},
            {"reduced", to_json(r.reduced)}};
}

nlohmann::json to_json(const Energy3D& e) {
    return {{"energy", to_json(e.energy)},
            {"nonpositive_det", e.nonpositive_det},
            {"outside_K", e.outside_K},
            {"nonsymmetric_log", e.nonsymmetric_log},
            {"dissipation_is_surrogate", e.dissipation_is_surrogate}};
}

nlohmann::json to_json(const ConvergenceTable& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : t.rows)
        rows.push_back({{"eps", num(r.epsilon)},
                        {"total", num(r.total)},
                        {"elastic", num(r.elastic)},
                        {"hardening", num(r.hardening)},
                        {"dissipation", num(r.dissipation)},
                        {"ratio_total", num(r.ratio_total)},
                        {"ratio_elastic", num(r.ratio_elastic)},
                        {"ratio_hardening", num(r.ratio_hardening)},
                        {"ratio_dissipation", num(r.ratio_dissipation)},
                        {"ratio_total_2d", num(r.ratio_total_2d)},
                        {"nonpositive_det", r.nonpositive_det},
                        {"outside_K", r.outside_K},
                        {"nonsymmetric_log", r.nonsymmetric_log}});
    return {{"limit", to_json(t.limit)},
            {"limit_2d", to_json(t.limit_2d)},
            {"rows", rows},
            {"dissipation_constant", num(t.dissipation_constant)},
            {"dissipation_bound_holds", t.dissipation_bound_holds}};
}

nlohmann::json report_envelope(const std::string& command, const ProblemConfig* cfg) {
    nlohmann::json j = {{"schema_version", kSchemaVersion}, {"command", command}};
    if (cfg) j["config"] = cfg->to_json();
    return j;
}

void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << j.dump(2) << '\n';
    if (!f) throw IoError("write failed: " + path);
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read " + path);
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
}

void write_csv(const std::string& path, const Table& t) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    for (std::size_t i = 0; i < t.columns.size(); ++i) f << (i ? "," : "") << t.columns[i];
    f << '\n';
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << format17(row[i]);
        f << '\n';
    }
    if (!f) throw IoError("write failed: " + path);
}

Table read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read " + path);
    Table t;
    std::string line;
    if (!std::getline(f, line)) throw IoError(path + ": empty file");
    std::stringstream hs(line);
    for (std::string col; std::getline(hs, col, ',');) t.columns.push_back(col);
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ls(line);
        for (std::string cell; std::getline(ls, cell, ',');) {
            double d;
            if (cell == "inf")
                d = kInfinity;
            else if (cell == "-inf")
                d = -kInfinity;
            else if (cell == "nan")
                d = std::nan("");
            else if (!parse_double(cell, d))
                throw IoError(path + ":" + std::to_string(lineno) + ": not a number: " + cell);
            row.push_back(d);
        }
        if (row.size() != t.columns.size()) throw IoError(path + ":" + std::to_string(lineno) + ": wrong column count");
        t.rows.push_back(std::move(row));
    }
    return t;
}

Table study_table(const ConvergenceTable& t) {
    Table out{{"eps", "total", "elastic", "hardening", "dissipation", "ratio_total"}, {}};
    for (const auto& r : t.rows) out.rows.push_back({r.epsilon, r.total, r.elastic, r.hardening, r.dissipation, r.ratio_total});
    return out;
}

Table displacement_table(const PlateGrid& g, const DisplacementState& st) {
    Table out{{"node", "x", "y", "ux", "uy", "v"}, {}};
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            const int n = g.node(i, j);
            out.rows.push_back({double(n), g.x(i), g.y(j), st.ux[n], st.uy[n], st.v[n]});
        }
    return out;
}

Table plastic_table(const PlateGrid& g, const std::vector<SymDev3>& p) {
    Table out{{"node", "q", "x", "y", "x3", "p1", "p2", "p3", "p4", "p5"}, {}};
    const int nq = g.n_x3();
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            const int n = g.node(i, j);
            for (int q = 0; q < nq; ++q) {
                const auto& s = p[n * nq + q];
                out.rows.push_back({double(n), double(q), g.x(i), g.y(j), g.x3_quad().x[q], s[0], s[1], s[2], s[3], s[4]});
            }
        }
    return out;
}

Table moment_table(const PlateGrid& g, const std::vector<SymDev3>& m) {
    Table out{{"node", "x", "y", "m1", "m2", "m3", "m4", "m5"}, {}};
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            const int n = g.node(i, j);
            const auto& s = m[n];
            out.rows.push_back({double(n), g.x(i), g.y(j), s[0], s[1], s[2], s[3], s[4]});
        }
    return out;
}

}  // namespace plateplast
