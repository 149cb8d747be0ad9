// Python bindings. Reports cross the boundary as JSON text so that the Python
// side sees exactly what the CLI writes; fields are returned as numpy arrays.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "plateplast/errors.hpp"
#include "plateplast/io.hpp"

namespace py = pybind11;
using namespace plateplast;

namespace {

Eigen::MatrixXd plastic_array(const std::vector<SymDev3>& p) {
    Eigen::MatrixXd a(p.size(), 5);
    for (std::size_t i = 0; i < p.size(); ++i) a.row(i) = p[i].coords().transpose();
    return a;
}

py::dict fields(const PlateGrid& g, const DisplacementState& st, const PlasticField& pf) {
    py::dict d;
    d["ux"] = st.ux;
    d["uy"] = st.uy;
    d["v"] = st.v;
    d["p"] = plastic_array(pf.p);
    d["n_x3"] = g.n_x3();
    return d;
}

py::dict reduce_tensor(double lambda, double mu, const Mat2& f) {
    const ReducedForm rf(make_isotropic(lambda, mu));
    const auto r = rf.relax(f);
    py::dict d;
    d["q2"] = rf.q2(f);
    d["lambdas"] = Eigen::Vector3d(r.lambdas);
    d["a_of_f"] = Eigen::Matrix3d(r.a_of_f);
    d["c2"] = Eigen::Matrix3d(rf.c2(f));
    return d;
}

py::dict prox(const Mat2& e, const SymDev3::Coords& p0, double lambda, double mu, double k_hard, double sigma_y, double rho_K) {
    const ReducedForm rf(make_isotropic(lambda, mu));
    const MaterialParams m{k_hard, sigma_y, rho_K};
    m.validate();
    SymDev3 q0;
    q0.coords() = p0;
    const auto r = plastic_prox(rf, m, DissipationSpec::von_mises(sigma_y), e, q0);
    py::dict d;
    d["p"] = SymDev3::Coords(r.p.coords());
    d["objective"] = r.objective;
    d["residual"] = r.residual;
    return d;
}

py::dict dissipation(const Mat3& f, double sigma_y, int segments) {
    const auto s = DissipationSpec::von_mises(sigma_y);
    py::dict d;
    d["exp_bound"] = dissipation_upper_exp(s, f);
    d["path_opt"] = dissipation_path_opt(s, f, segments);
    return d;
}

std::string parse(const std::string& text) { return parse_config(text).to_json().dump(); }

py::tuple solve(const std::string& text) {
    const auto cfg = parse_config(text);
    const auto model = build_model(cfg);
    DisplacementState st;
    PlasticField pf;
    nlohmann::json j;
    {
        py::gil_scoped_release release;
        const auto rep = solve_limit(model, cfg, st, pf);
        j = report_envelope("solve-limit", &cfg);
        j["result"] = to_json(rep);
    }
    return py::make_tuple(j.dump(), fields(model.grid(), st, pf));
}

std::string check_reduction(const std::string& text, const std::string& kind) {
    const auto cfg = parse_config(text);
    if (kind != "membrane" && kind != "bending") throw ConfigError({"kind must be 'membrane' or 'bending'"});
    const auto model = build_model(cfg);
    const auto p0 = build_p0(cfg, model.grid());
    py::gil_scoped_release release;
    const auto r = kind == "membrane" ? check_membrane_reduction(model, cfg.alpha, p0, cfg.solver)
                                      : check_bending_reduction(model, cfg.alpha, p0, cfg.solver);
    auto j = report_envelope("moments", &cfg);
    j["check"] = kind;
    j["reduction"] = to_json(r);
    return j.dump();
}

std::string recovery_study(const std::string& text, const std::vector<double>& eps) {
    auto cfg = parse_config(text);
    if (!eps.empty()) cfg.eps = eps;
    const auto model = build_model(cfg);
    const auto g3 = build_grid3d(cfg);
    py::gil_scoped_release release;
    DisplacementState st;
    PlasticField pf;
    auto j = report_envelope("recovery-study", &cfg);
    j["solve"] = to_json(solve_limit(model, cfg, st, pf));
    j["triple"] = "minimizer";
    j["study"] = to_json(convergence_study(model, g3, st, pf, cfg.alpha, cfg.eps));
    return j.dump();
}

std::string solve_3d_json(const std::string& text, double eps, int nz) {
    const auto cfg = parse_config(text);
    if (!(eps > 0.0)) throw ConfigError({"eps must be positive"});
    const auto model = build_model(cfg);
    const Grid3D g3(model.grid(), nz);
    py::gil_scoped_release release;
    DisplacementState st;
    PlasticField pf;
    const auto limit = solve_limit(model, cfg, st, pf);
    const auto r = solve_3d(model, g3, build_p0(cfg, model.grid()), cfg.alpha, eps);
    auto j = report_envelope("solve-3d", &cfg);
    j["eps"] = num(eps);
    j["nz"] = nz;
    j["limit_minimum"] = num(limit.energy.total);
    j["energy_3d"] = to_json(r.energy);
    j["iterations"] = r.iterations;
    j["converged"] = r.converged;
    return j.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Elastoplastic thin plate limit models (compiled core)";
    m.attr("schema_version") = kSchemaVersion;

    // Later registrations are tried first, so the base class goes first.
    auto& base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<HypothesisError>(m, "HypothesisError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    m.def("reduce_tensor", &reduce_tensor, py::arg("lmbda"), py::arg("mu"), py::arg("F"),
          "Plane-stress relaxation of an isotropic tensor at a 2x2 matrix F.");
    m.def("plastic_prox", &prox, py::arg("e"), py::arg("p0"), py::arg("lmbda") = 1.0, py::arg("mu") = 1.0,
          py::arg("k_hard") = 1.0, py::arg("sigma_y") = 1.0, py::arg("rho_K") = 0.5,
          "Pointwise plastic update for membrane strain e and previous plastic strain p0 (5 coordinates).");
    m.def("dissipation", &dissipation, py::arg("F"), py::arg("sigma_y") = 1.0, py::arg("segments") = 4,
          "Upper bounds for D(Id, F): exponential path and optimized piecewise path.");
    m.def("parse_config", &parse, py::arg("text"), "Validated config echo as JSON text.");
    m.def("solve_limit", &solve, py::arg("text"), "Report JSON text and nodal fields.");
    m.def("check_reduction", &check_reduction, py::arg("text"), py::arg("kind"));
    m.def("recovery_study", &recovery_study, py::arg("text"), py::arg("eps") = std::vector<double>{});
    m.def("solve_3d", &solve_3d_json, py::arg("text"), py::arg("eps") = 0.05, py::arg("nz") = 5);
}
