// plateplast command line: one subcommand per operation, JSON on stdout,
// CSV/JSON files under --out.

#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "plateplast/errors.hpp"
#include "plateplast/io.hpp"

using namespace plateplast;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kNonConvergence = 3, kHypothesis = 4 };

std::vector<double> parse_list(const std::string& s, std::size_t expected, const std::string& what) {
    std::vector<double> v;
    std::stringstream ss(s);
    for (std::string tok; std::getline(ss, tok, ',');) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ConfigError({what + ": not a number: " + tok});
        }
    }
    if (expected && v.size() != expected)
        throw ConfigError({what + ": expected " + std::to_string(expected) + " comma-separated numbers"});
    return v;
}

std::string prepare_out(const std::string& dir) {
    if (dir.empty()) return dir;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
    return dir;
}

std::string join_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

bool solved(const SolveReport& r) { return r.converged && !r.flagged; }

void emit(const json& j, const std::string& out, const std::string& name) {
    if (!out.empty()) write_json(join_path(out, name), j);
    std::cout << j.dump(2) << '\n';
}

int cmd_reduce_tensor(double lambda, double mu, const std::string& config, const std::string& f_arg,
                      const std::string& out) {
    ProblemConfig cfg;
    const bool from_cfg = !config.empty();
    if (from_cfg) {
        cfg = load_config(config);
        lambda = cfg.lambda;
        mu = cfg.mu;
    }
    const ElasticTensor c = make_isotropic(lambda, mu);
    const ReducedForm rf(c);
    json j = report_envelope("reduce-tensor", from_cfg ? &cfg : nullptr);
    auto mat = [](const auto& m) {
        json a = json::array();
        for (int i = 0; i < m.rows(); ++i) {
            json row = json::array();
            for (int k = 0; k < m.cols(); ++k) row.push_back(num(m(i, k)));
            a.push_back(row);
        }
        return a;
    };
    j["lambda"] = num(lambda);
    j["mu"] = num(mu);
    j["r_lower"] = num(c.r_lower());
    j["r_upper"] = num(c.r_upper());
    j["q2_matrix_mandel"] = mat(rf.q2_matrix());
    j["lambda_map_mandel"] = mat(rf.lambda_map());
    if (!f_arg.empty()) {
        const auto v = parse_list(f_arg, 4, "--f");
        const Mat2 f = (Mat2() << v[0], v[1], v[2], v[3]).finished();
        const auto r = rf.relax(f);
        j["F"] = mat(f);
        j["lambdas"] = {num(r.lambdas[0]), num(r.lambdas[1]), num(r.lambdas[2])};
        j["A_of_F"] = mat(r.a_of_f);
        j["q2"] = num(rf.q2(f));
        j["c2"] = mat(rf.c2(f));
    }
    emit(j, prepare_out(out), "reduce_tensor.json");
    return kOk;
}

int cmd_solve_limit(const std::string& config, const std::string& out_arg) {
    const auto cfg = load_config(config);
    const std::string out = prepare_out(out_arg);
    const auto model = build_model(cfg);
    DisplacementState st;
    PlasticField pf;
    const auto rep = solve_limit(model, cfg, st, pf);
    json j = report_envelope("solve-limit", &cfg);
    j["result"] = to_json(rep);
    if (!out.empty()) {
        write_csv(join_path(out, "displacement.csv"), displacement_table(model.grid(), st));
        write_csv(join_path(out, "plastic.csv"), plastic_table(model.grid(), pf.p));
    }
    emit(j, out, "report.json");
    return solved(rep) ? kOk : kNonConvergence;
}

int cmd_moments(const std::string& config, const std::string& check, const std::string& out_arg) {
    const auto cfg = load_config(config);
    const std::string out = prepare_out(out_arg);
    const auto model = build_model(cfg);
    json j = report_envelope("moments", &cfg);
    bool ok = true;
    DisplacementState st;
    PlasticField pf;
    if (check.empty()) {
        const auto rep = solve_limit(model, cfg, st, pf);
        j["solve"] = to_json(rep);
        ok = solved(rep);
    } else {
        const auto p0 = build_p0(cfg, model.grid());
        const auto r = check == "membrane" ? check_membrane_reduction(model, cfg.alpha, p0, cfg.solver)
                                           : check_bending_reduction(model, cfg.alpha, p0, cfg.solver);
        j["check"] = check;
        j["reduction"] = to_json(r);
        st = r.state;
        pf = r.plastic;
        ok = solved(r.full) && solved(r.reduced);
    }
    const auto d = decompose(pf, model.grid());
    const auto& quad = model.grid().x3_quad();
    j["orthogonality_defect"] = num(d.orthogonality_defect(quad));
    j["reconstruction_defect"] = num(d.reconstruction_defect(quad, pf.p));
    const auto split = eval_J_split(model, cfg.alpha, st, pf);
    j["split"] = {{"membrane", num(split.membrane)},       {"bending", num(split.bending)},
                  {"perp_elastic", num(split.perp_elastic)}, {"hard_bar", num(split.hard_bar)},
                  {"hard_hat", num(split.hard_hat)},       {"hard_perp", num(split.hard_perp)},
                  {"dissipation", num(split.dissipation)}, {"total", num(split.total)}};
    if (!out.empty()) {
        write_csv(join_path(out, "p_bar.csv"), moment_table(model.grid(), d.p_bar));
        write_csv(join_path(out, "p_hat.csv"), moment_table(model.grid(), d.p_hat));
        write_csv(join_path(out, "p_perp.csv"), plastic_table(model.grid(), d.p_perp));
    }
    emit(j, out, "moments.json");
    return ok ? kOk : kNonConvergence;
}

int cmd_dissipation(double sigma, const std::string& config, const std::string& f_arg, int segments,
                    const std::string& out) {
    ProblemConfig cfg;
    const bool from_cfg = !config.empty();
    if (from_cfg) {
        cfg = load_config(config);
        sigma = cfg.sigma_y;
    }
    if (!(sigma > 0.0)) throw ConfigError({"--sigma must be positive"});
    if (segments < 1) throw ConfigError({"--segments must be at least 1"});
    const auto v = parse_list(f_arg, 9, "--f");
    Mat3 f;
    for (int i = 0; i < 9; ++i) f(i / 3, i % 3) = v[i];
    const auto s = DissipationSpec::von_mises(sigma);
    json j = report_envelope("dissipation", from_cfg ? &cfg : nullptr);
    j["sigma_y"] = num(sigma);
    j["det_F"] = num(f.determinant());
    j["exp_bound"] = num(dissipation_upper_exp(s, f));
    json path = json::array();
    for (int n = segments; n <= 4 * segments; n *= 2)
        path.push_back({{"segments", n}, {"value", num(dissipation_path_opt(s, f, n))}});
    j["path_opt"] = path;
    emit(j, prepare_out(out), "dissipation.json");
    return kOk;
}

// Smooth compactly supported triple scaled to the configured domain.
void bump_triple(const PlateModel& model, const ProblemConfig& cfg, DisplacementState& st, PlasticField& pf) {
    const auto& g = model.grid();
    st = DisplacementState::zeros(g.n_nodes());
    pf = model.make_plastic_field();
    pf.p0 = build_p0(cfg, g);
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            const int n = g.node(i, j);
            const double phi = std::pow(std::sin(M_PI * g.x(i) / g.lx()) * std::sin(M_PI * g.y(j) / g.ly()), 2);
            st.ux[n] = 0.1 * phi;
            st.uy[n] = 0.05 * phi;
            st.v[n] = 0.1 * phi;
            for (int q = 0; q < g.n_x3(); ++q)
                pf.at(n, q) = phi * (SymDev3(0.5, 0, 0, 0, 0) + g.x3_quad().x[q] * SymDev3(0, 0.5, 0, 0.2, 0));
        }
    const auto ext = model.boundary_extension();
    for (int n = 0; n < g.n_nodes(); ++n) {
        st.ux[n] += ext.ux[n];
        st.uy[n] += ext.uy[n];
        st.v[n] += ext.v[n];
    }
}

int cmd_recovery_study(const std::string& config, const std::string& eps_arg, const std::string& triple,
                       const std::string& out_arg) {
    auto cfg = load_config(config);
    if (!eps_arg.empty()) {
        cfg.eps = parse_list(eps_arg, 0, "--eps");
        if (cfg.eps.empty()) throw ConfigError({"--eps: empty list"});
    }
    const std::string out = prepare_out(out_arg);
    const auto model = build_model(cfg);
    const auto g3 = build_grid3d(cfg);
    DisplacementState st;
    PlasticField pf;
    json j = report_envelope("recovery-study", &cfg);
    bool ok = true;
    if (triple == "bump") {
        bump_triple(model, cfg, st, pf);
    } else {
        const auto rep = solve_limit(model, cfg, st, pf);
        j["solve"] = to_json(rep);
        ok = solved(rep);
    }
    j["triple"] = triple;
    const auto tab = convergence_study(model, g3, st, pf, cfg.alpha, cfg.eps);
    j["study"] = to_json(tab);
    if (!out.empty()) write_csv(join_path(out, "recovery_study.csv"), study_table(tab));
    emit(j, out, "recovery_study.json");
    return ok ? kOk : kNonConvergence;
}

int cmd_solve_3d(const std::string& config, double eps, int nz, const std::string& out_arg) {
    const auto cfg = load_config(config);
    if (!(eps > 0.0)) throw ConfigError({"--eps must be positive"});
    const std::string out = prepare_out(out_arg);
    const auto model = build_model(cfg);
    const Grid3D g3(model.grid(), nz);
    DisplacementState st;
    PlasticField pf;
    const auto limit = solve_limit(model, cfg, st, pf);
    const auto r = solve_3d(model, g3, build_p0(cfg, model.grid()), cfg.alpha, eps);
    json j = report_envelope("solve-3d", &cfg);
    j["eps"] = num(eps);
    j["nz"] = nz;
    j["limit_minimum"] = num(limit.energy.total);
    j["energy_3d"] = to_json(r.energy);
    j["iterations"] = r.iterations;
    j["converged"] = r.converged;
    const double m2 = limit.energy.total;
    j["relative_difference"] = num(m2 != 0.0 ? (r.energy.energy.total - m2) / std::abs(m2) : r.energy.energy.total);
    j["note"] = "exploratory: direct nonconvex 3D minimization, no convergence guarantee";
    emit(j, out, "solve_3d.json");
    return solved(limit) && r.converged ? kOk : kNonConvergence;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Elastoplastic thin plates: limit models, moment reductions and recovery sequences"};
    app.require_subcommand(1);

    std::string config, out, f_arg, check, eps_arg, triple = "minimizer";
    double lambda = 1.0, mu = 1.0, sigma = 1.0, eps3 = 0.05;
    int segments = 4, nz = 5;

    auto* rt = app.add_subcommand("reduce-tensor", "Plane-stress reduction of an isotropic tensor");
    rt->add_option("--lambda", lambda, "Lame lambda");
    rt->add_option("--mu", mu, "Lame mu");
    rt->add_option("--config", config, "Take lambda, mu from a config file");
    rt->add_option("--f", f_arg, "2x2 matrix F as a,b,c,d (row major)");
    rt->add_option("--out", out, "Output directory");

    auto* sl = app.add_subcommand("solve-limit", "Minimize the limit functional");
    sl->add_option("--config", config, "Config file")->required();
    sl->add_option("--out", out, "Output directory");

    auto* mo = app.add_subcommand("moments", "Moment decomposition and reduction checks");
    mo->add_option("--config", config, "Config file")->required();
    mo->add_option("--check", check, "membrane or bending")->check(CLI::IsMember({"membrane", "bending"}));
    mo->add_option("--out", out, "Output directory");

    auto* di = app.add_subcommand("dissipation", "Dissipation distance bounds D(Id, F)");
    di->add_option("--f", f_arg, "3x3 matrix F, nine numbers row major")->required();
    di->add_option("--sigma", sigma, "Yield stress of the von Mises potential");
    di->add_option("--config", config, "Take sigma_y from a config file");
    di->add_option("--segments", segments, "Path segments (also doubled twice)");
    di->add_option("--out", out, "Output directory");

    auto* rs = app.add_subcommand("recovery-study", "Energies of recovery sequences as eps -> 0");
    rs->add_option("--config", config, "Config file")->required();
    rs->add_option("--eps", eps_arg, "Comma-separated decreasing eps list (default from config)");
    rs->add_option("--triple", triple, "minimizer or bump")->check(CLI::IsMember({"minimizer", "bump"}));
    rs->add_option("--out", out, "Output directory");

    auto* s3 = app.add_subcommand("solve-3d", "Exploratory direct 3D minimization");
    s3->add_option("--config", config, "Config file")->required();
    s3->add_option("--eps", eps3, "Thickness");
    s3->add_option("--nz", nz, "x3 nodes (odd)");
    s3->add_option("--out", out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    try {
        if (*rt) return cmd_reduce_tensor(lambda, mu, config, f_arg, out);
        if (*sl) return cmd_solve_limit(config, out);
        if (*mo) return cmd_moments(config, check, out);
        if (*di) return cmd_dissipation(sigma, config, f_arg, segments, out);
        if (*rs) return cmd_recovery_study(config, eps_arg, triple, out);
        if (*s3) return cmd_solve_3d(config, eps3, nz, out);
    } catch (const ConfigError& e) {
        for (const auto& v : e.violations()) std::cerr << "config error: " << v << '\n';
        return kConfig;
    } catch (const InvalidMaterialError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const HypothesisError& e) {
        std::cerr << "hypothesis violation: " << e.what() << '\n';
        return kHypothesis;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kFailure;
}
