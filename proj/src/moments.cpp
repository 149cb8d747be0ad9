#include "plateplast/moments.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "plateplast/errors.hpp"
#include "plateplast/parallel.hpp"

namespace plateplast {

namespace {

constexpr double kTiny = 1e-300;
constexpr double kMonotoneSlack = 1e-13;

Mandel3 minor_of(const SymDev3& p) { return minor_map() * p.coords(); }

double rel_change(double before, double after) { return (before - after) / std::max(std::abs(after), kTiny); }

void check_u_admissible(const PlateModel& model, const DisplacementState& st) {
    DisplacementState probe = model.boundary_extension();
    probe.ux = st.ux;
    probe.uy = st.uy;
    model.check_admissible(probe);
}

void check_v_admissible(const PlateModel& model, const DisplacementState& st) {
    DisplacementState probe = model.boundary_extension();
    probe.v = st.v;
    model.check_admissible(probe);
}

/// Shared driver for the reduced functionals.
SolveReport run_reduced(const std::function<void(SolveReport&)>& displacement_step,
                        const std::function<void(SolveReport&)>& plastic_step, const std::function<double()>& energy,
                        const SolverOptions& opt) {
    SolveReport rep;
    double prev = energy();
    rep.energy_trace.push_back(prev);
    for (int k = 0; k < opt.max_outer; ++k) {
        displacement_step(rep);
        const double e1 = energy();
        if (!opt.freeze_plastic) plastic_step(rep);
        const double e2 = energy();
        ++rep.iterations;
        rep.energy_trace.push_back(e1);
        rep.energy_trace.push_back(e2);
        if (e1 > prev + kMonotoneSlack * std::abs(prev)) ++rep.monotone_violations;
        if (e2 > e1 + kMonotoneSlack * std::abs(e1)) ++rep.monotone_violations;
        const double dec = rel_change(prev, e2);
        prev = e2;
        if (dec < opt.tol) {
            rep.converged = true;
            break;
        }
    }
    rep.flagged = !rep.converged;
    displacement_step(rep);
    if (!opt.freeze_plastic) plastic_step(rep);
    rep.terminal_improvement = rel_change(prev, energy());
    return rep;
}

}  // namespace

double MomentDecomposition::orthogonality_defect(const Quadrature1D& quad) const {
    double worst = 0.0;
    const int nq = n_x3;
    for (std::size_t n = 0; n < p_bar.size(); ++n) {
        SymDev3 m0, m1;
        for (int q = 0; q < nq; ++q) {
            const SymDev3& s = p_perp[n * nq + q];
            m0 += quad.w[q] * s;
            m1 += (quad.w[q] * quad.x[q]) * s;
        }
        worst = std::max({worst, m0.norm(), m1.norm()});
    }
    return worst;
}

double MomentDecomposition::reconstruction_defect(const Quadrature1D& quad, const std::vector<SymDev3>& p) const {
    double worst = 0.0;
    const int nq = n_x3;
    for (std::size_t n = 0; n < p_bar.size(); ++n)
        for (int q = 0; q < nq; ++q) {
            const SymDev3 r = p_bar[n] + quad.x[q] * p_hat[n] + p_perp[n * nq + q];
            worst = std::max(worst, (r - p[n * nq + q]).norm());
        }
    return worst;
}

MomentDecomposition decompose(const std::vector<SymDev3>& p, const PlateGrid& grid) {
    const int nn = grid.n_nodes(), nq = grid.n_x3();
    if (static_cast<int>(p.size()) != nn * nq) throw Error("plastic field does not match the grid sampling");
    const auto& quad = grid.x3_quad();
    MomentDecomposition d;
    d.n_x3 = nq;
    d.p_bar.resize(nn);
    d.p_hat.resize(nn);
    d.p_perp.resize(p.size());
    for (int n = 0; n < nn; ++n) {
        SymDev3 bar, hat;
        for (int q = 0; q < nq; ++q) {
            bar += quad.w[q] * p[n * nq + q];
            hat += (12.0 * quad.w[q] * quad.x[q]) * p[n * nq + q];
        }
        d.p_bar[n] = bar;
        d.p_hat[n] = hat;
        for (int q = 0; q < nq; ++q) d.p_perp[n * nq + q] = p[n * nq + q] - bar - quad.x[q] * hat;
    }
    return d;
}

SplitBreakdown eval_J_split(const PlateModel& model, double alpha, const DisplacementState& st, const PlasticField& pf) {
    model.check_admissible(st);
    const PlateGrid& grid = model.grid();
    const int nn = grid.n_nodes(), nq = grid.n_x3();
    const auto& quad = grid.x3_quad();
    const auto& area = grid.node_area();
    const auto& rf = model.reduced();
    const auto& mat = model.material();
    const MomentDecomposition d = decompose(pf, grid);
    const std::vector<Mandel3> m = model.membrane_strain(st, alpha == 3.0);
    const std::vector<Mandel3> h = model.curvature(st.v);

    std::vector<double> mem(model.n_gauss());
    for (int gp = 0; gp < model.n_gauss(); ++gp)
        mem[gp] = model.gauss_weight(gp) * rf.q2(Mandel3(m[gp] - minor_of(d.p_bar[model.gauss_owner(gp)])));
    std::vector<double> bend(nn), perp(nn), hb(nn), hh(nn), hp(nn), dis(nn);
    for (int n = 0; n < nn; ++n) {
        bend[n] = area[n] / 12.0 * rf.q2(Mandel3(h[n] + minor_of(d.p_hat[n])));
        hb[n] = area[n] * hardening_B(mat, d.p_bar[n]);
        hh[n] = area[n] / 12.0 * hardening_B(mat, d.p_hat[n]);
        double sp = 0, sh = 0, sd = 0;
        for (int q = 0; q < nq; ++q) {
            const SymDev3& pp = d.p_perp[n * nq + q];
            sp += quad.w[q] * rf.q2(minor_of(pp));
            sh += quad.w[q] * hardening_B(mat, pp);
            sd += quad.w[q] * h_d(model.dissipation(), pf.at(n, q) - pf.at0(n, q));
        }
        perp[n] = area[n] * sp;
        hp[n] = area[n] * sh;
        dis[n] = area[n] * sd;
    }
    SplitBreakdown r;
    r.membrane = pairwise_sum(mem);
    r.bending = pairwise_sum(bend);
    r.perp_elastic = pairwise_sum(perp);
    r.hard_bar = pairwise_sum(hb);
    r.hard_hat = pairwise_sum(hh);
    r.hard_perp = pairwise_sum(hp);
    r.dissipation = pairwise_sum(dis);
    r.total = r.membrane + r.bending + r.perp_elastic + r.hard_bar + r.hard_hat + r.hard_perp + r.dissipation;
    return r;
}

EnergyBreakdown eval_J_bar(const PlateModel& model, const DisplacementState& st, const std::vector<SymDev3>& p_bar,
                           const std::vector<SymDev3>& p0_bar) {
    check_u_admissible(model, st);
    const int nn = model.grid().n_nodes();
    if (static_cast<int>(p_bar.size()) != nn || static_cast<int>(p0_bar.size()) != nn)
        throw Error("moment field does not match the grid");
    const auto& area = model.grid().node_area();
    const std::vector<Mandel3> m = model.membrane_strain(st, false);
    std::vector<double> el(model.n_gauss()), hard(nn), dis(nn);
    for (int gp = 0; gp < model.n_gauss(); ++gp)
        el[gp] = model.gauss_weight(gp) * model.reduced().q2(Mandel3(m[gp] - minor_of(p_bar[model.gauss_owner(gp)])));
    for (int n = 0; n < nn; ++n) {
        hard[n] = area[n] * hardening_B(model.material(), p_bar[n]);
        dis[n] = area[n] * h_d(model.dissipation(), p_bar[n] - p0_bar[n]);
    }
    EnergyBreakdown r;
    r.elastic_2d = pairwise_sum(el);
    r.hardening = pairwise_sum(hard);
    r.dissipation = pairwise_sum(dis);
    r.total = r.elastic_2d + r.hardening + r.dissipation;
    return r;
}

EnergyBreakdown eval_J_hat(const PlateModel& model, const DisplacementState& st, const std::vector<SymDev3>& p_hat,
                           const std::vector<SymDev3>& p0_hat) {
    check_v_admissible(model, st);
    const int nn = model.grid().n_nodes();
    if (static_cast<int>(p_hat.size()) != nn || static_cast<int>(p0_hat.size()) != nn)
        throw Error("moment field does not match the grid");
    const auto& area = model.grid().node_area();
    const std::vector<Mandel3> h = model.curvature(st.v);
    std::vector<double> el(nn), hard(nn), dis(nn);
    for (int n = 0; n < nn; ++n) {
        el[n] = area[n] * model.reduced().q2(Mandel3(h[n] + minor_of(p_hat[n])));
        hard[n] = area[n] * hardening_B(model.material(), p_hat[n]);
        dis[n] = area[n] * h_d(model.dissipation(), p_hat[n] - p0_hat[n]);
    }
    EnergyBreakdown r;
    r.elastic_2d = pairwise_sum(el);
    r.hardening = pairwise_sum(hard);
    r.dissipation = pairwise_sum(dis);
    r.total = r.elastic_2d + r.hardening + r.dissipation;
    return r;
}

namespace {

void prepare(const PlateModel& model, DisplacementState& st, std::vector<SymDev3>& p, const std::vector<SymDev3>& p0) {
    const int nn = model.grid().n_nodes();
    if (static_cast<int>(p0.size()) != nn) throw Error("moment field does not match the grid");
    if (st.ux.size() != nn || st.uy.size() != nn || st.v.size() != nn) st = model.boundary_extension();
    if (static_cast<int>(p.size()) != nn) p = p0;
}

}  // namespace

SolveReport minimize_J_bar(const PlateModel& model, DisplacementState& st, std::vector<SymDev3>& p_bar,
                           const std::vector<SymDev3>& p0_bar, const SolverOptions& opt) {
    prepare(model, st, p_bar, p0_bar);
    check_u_admissible(model, st);
    model.set_cg_tolerance(opt.cg_tol);
    const int nn = model.grid().n_nodes();
    auto disp = [&](SolveReport& rep) {
        std::vector<Mandel3> target(model.n_gauss());
        for (int gp = 0; gp < model.n_gauss(); ++gp) target[gp] = minor_of(p_bar[model.gauss_owner(gp)]);
        model.solve_membrane(target, st, &rep);
    };
    auto plast = [&](SolveReport& rep) {
        const std::vector<Mandel3> e = model.node_membrane_strain(st, false);
        for (int n = 0; n < nn; ++n) {
            const ProxResult r =
                plastic_prox(model.reduced(), model.material(), model.dissipation(), from_mandel(e[n]), p0_bar[n]);
            p_bar[n] = r.p;
            rep.max_prox_residual = std::max(rep.max_prox_residual, r.residual);
        }
    };
    auto energy = [&] { return eval_J_bar(model, st, p_bar, p0_bar).total; };
    SolveReport rep = run_reduced(disp, plast, energy, opt);
    rep.energy = eval_J_bar(model, st, p_bar, p0_bar);
    return rep;
}

SolveReport minimize_J_hat(const PlateModel& model, DisplacementState& st, std::vector<SymDev3>& p_hat,
                           const std::vector<SymDev3>& p0_hat, const SolverOptions& opt) {
    prepare(model, st, p_hat, p0_hat);
    check_v_admissible(model, st);
    model.set_cg_tolerance(opt.cg_tol);
    const int nn = model.grid().n_nodes();
    auto disp = [&](SolveReport& rep) {
        std::vector<Mandel3> target(nn);
        for (int n = 0; n < nn; ++n) target[n] = -minor_of(p_hat[n]);
        model.solve_bending(target, st, &rep);
    };
    auto plast = [&](SolveReport& rep) {
        const std::vector<Mandel3> h = model.curvature(st.v);
        for (int n = 0; n < nn; ++n) {
            const ProxResult r =
                plastic_prox(model.reduced(), model.material(), model.dissipation(), from_mandel(Mandel3(-h[n])),
                             p0_hat[n]);
            p_hat[n] = r.p;
            rep.max_prox_residual = std::max(rep.max_prox_residual, r.residual);
        }
    };
    auto energy = [&] { return eval_J_hat(model, st, p_hat, p0_hat).total; };
    SolveReport rep = run_reduced(disp, plast, energy, opt);
    rep.energy = eval_J_hat(model, st, p_hat, p0_hat);
    return rep;
}

namespace {

double relative_gap(double full, double reduced) {
    const double scale = std::abs(reduced);
    if (scale < kTiny) return std::abs(full) < kTiny ? 0.0 : kInfinity;
    return std::abs(full - reduced) / scale;
}

PlasticField field_with_p0(const PlateModel& model, const std::vector<SymDev3>& p0) {
    PlasticField pf = model.make_plastic_field();
    if (p0.size() != pf.p0.size()) throw Error("initial plastic strain does not match the grid sampling");
    pf.p0 = p0;
    pf.p = p0;
    return pf;
}

double moment_scale(const std::vector<SymDev3>& p) {
    double s = 0.0;
    for (const auto& x : p) s = std::max(s, x.norm());
    return s;
}

}  // namespace

ReductionReport check_membrane_reduction(const PlateModel& model, double alpha, const std::vector<SymDev3>& p0,
                                         const SolverOptions& opt) {
    if (!(alpha > 3.0)) throw HypothesisError("membrane reduction is stated for alpha > 3");
    if (!model.bc().v0.is_zero()) throw HypothesisError("membrane reduction requires v0 = 0");
    const PlateGrid& grid = model.grid();
    PlasticField pf = field_with_p0(model, p0);
    const MomentDecomposition d0 = decompose(pf.p0, grid);
    const double tol = 1e-14 * (1.0 + moment_scale(p0));
    for (int n = 0; n < grid.n_nodes(); ++n)
        if (d0.p_hat[n].norm() > tol)
            throw HypothesisError("membrane reduction requires p0 independent of x3");
    for (const auto& s : d0.p_perp)
        if (s.norm() > tol) throw HypothesisError("membrane reduction requires p0 independent of x3");

    ReductionReport r;
    DisplacementState st = model.boundary_extension();
    r.full = minimize_linear(model, alpha, st, pf, opt);
    r.min_full = r.full.energy.total;

    DisplacementState sb = model.boundary_extension();
    std::vector<SymDev3> pbar = d0.p_bar;
    r.reduced = minimize_J_bar(model, sb, pbar, d0.p_bar, opt);
    r.min_reduced = r.reduced.energy.total;
    r.rel_gap = relative_gap(r.min_full, r.min_reduced);

    r.v_inf = st.v.cwiseAbs().maxCoeff();
    const MomentDecomposition d = decompose(pf, grid);
    for (int n = 0; n < grid.n_nodes(); ++n)
        for (int q = 0; q < grid.n_x3(); ++q)
            r.x3_variation = std::max(r.x3_variation, (pf.at(n, q) - d.p_bar[n]).norm());
    r.jensen_lhs = r.full.energy.dissipation;
    std::vector<double> rhs(grid.n_nodes());
    for (int n = 0; n < grid.n_nodes(); ++n)
        rhs[n] = grid.node_area()[n] * h_d(model.dissipation(), d.p_bar[n] - d0.p_bar[n]);
    r.jensen_rhs = pairwise_sum(rhs);
    r.jensen_holds = r.jensen_lhs >= r.jensen_rhs * (1.0 - 1e-12);
    r.state = std::move(st);
    r.plastic = std::move(pf);
    return r;
}

ReductionReport check_bending_reduction(const PlateModel& model, double alpha, const std::vector<SymDev3>& p0,
                                        const SolverOptions& opt) {
    if (!(alpha > 3.0)) throw HypothesisError("bending reduction is stated for alpha > 3 only");
    if (!model.bc().u0x.is_zero() || !model.bc().u0y.is_zero())
        throw HypothesisError("bending reduction requires u0 = 0");
    if (!model.dissipation().even) throw HypothesisError("bending reduction requires an even dissipation potential");
    const PlateGrid& grid = model.grid();
    PlasticField pf = field_with_p0(model, p0);
    const MomentDecomposition d0 = decompose(pf.p0, grid);
    const double tol = 1e-14 * (1.0 + moment_scale(p0));
    for (int n = 0; n < grid.n_nodes(); ++n)
        if (d0.p_bar[n].norm() > tol) throw HypothesisError("bending reduction requires p0 linear in x3");
    for (const auto& s : d0.p_perp)
        if (s.norm() > tol) throw HypothesisError("bending reduction requires p0 linear in x3");

    ReductionReport r;
    DisplacementState st = model.boundary_extension();
    r.full = minimize_linear(model, alpha, st, pf, opt);
    r.min_full = r.full.energy.total;

    DisplacementState sh = model.boundary_extension();
    std::vector<SymDev3> phat = d0.p_hat;
    r.reduced = minimize_J_hat(model, sh, phat, d0.p_hat, opt);
    r.min_reduced = r.reduced.energy.total / 12.0;
    r.rel_gap = relative_gap(r.min_full, r.min_reduced);

    const MomentDecomposition d = decompose(pf, grid);
    const auto& quad = grid.x3_quad();
    const auto& area = grid.node_area();
    std::vector<double> rhs(grid.n_nodes()), lin(grid.n_nodes()), tot(grid.n_nodes());
    for (int n = 0; n < grid.n_nodes(); ++n) {
        rhs[n] = area[n] / 12.0 * h_d(model.dissipation(), d.p_hat[n] - d0.p_hat[n]);
        lin[n] = area[n] * d.p_hat[n].coords().squaredNorm() / 12.0;
        double s = 0;
        for (int q = 0; q < grid.n_x3(); ++q) s += quad.w[q] * pf.at(n, q).coords().squaredNorm();
        tot[n] = area[n] * s;
    }
    r.jensen_lhs = r.full.energy.dissipation;
    r.jensen_rhs = pairwise_sum(rhs);
    r.jensen_holds = r.jensen_lhs >= r.jensen_rhs * (1.0 - 1e-12);
    const double lin_sum = pairwise_sum(lin), tot_sum = pairwise_sum(tot);
    r.linear_profile_correlation = tot_sum > 0.0 ? std::sqrt(lin_sum / tot_sum) : 1.0;
    r.v_inf = st.v.cwiseAbs().maxCoeff();
    r.state = std::move(st);
    r.plastic = std::move(pf);
    return r;
}

}  // namespace plateplast
