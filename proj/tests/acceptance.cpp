// Acceptance suite: one PASS/FAIL line per criterion, tolerances fixed below.
// Exit status is 0 when every failing criterion is listed in --known-failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include <unsupported/Eigen/MatrixFunctions>

#include "plateplast/errors.hpp"
#include "plateplast/moments.hpp"
#include "plateplast/three_d.hpp"

using namespace plateplast;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = true;
    bool informational = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

const SymDev3 kN(1, 0, 0, 0, 0);  // diag(1, -1, 0) / sqrt 2
const std::vector<Edge> kAllEdges = {Edge::left, Edge::right, Edge::bottom, Edge::top};

// ---------------------------------------------------------------- 1

double q2_closed(double lambda, double mu, const Mat2& f) {
    const Mat2 s = 0.5 * (f + f.transpose());
    return mu * s.squaredNorm() + mu * lambda / (lambda + 2 * mu) * s.trace() * s.trace();
}

Outcome tensor_reduction() {
    const auto t0 = Clock::now();
    std::mt19937 rng(1);
    std::normal_distribution<double> n01;
    double err = 0.0;
    for (auto [lambda, mu] : {std::pair{1.0, 1.0}, std::pair{2.0, 0.5}, std::pair{0.0, 1.0}}) {
        const ElasticTensor c = make_isotropic(lambda, mu);
        const ReducedForm rf(c);
        for (int t = 0; t < 1000; ++t) {
            Mat2 f;
            f << n01(rng), n01(rng), n01(rng), n01(rng);
            const double ref = q2_closed(lambda, mu, f);
            err = std::max(err, std::abs(rf.q2(f) - ref));
            err = std::max(err, std::abs(c.quad_form(relax(c, f).a_of_f) - ref));
        }
    }
    const double dt = seconds_since(t0);
    return {err <= 1e-12 && dt < 1.0, false, fmt("max |Q2 - closed form| = %.2e (tol 1e-12), %.3f s (limit 1 s)", err, dt)};
}

// ---------------------------------------------------------------- 2

// Pointwise objective from its definition, with the closed isotropic Q2.
double prox_oracle(const Mat2& e, const SymDev3& p0, const SymDev3& p, double k, double sigma) {
    const Mat3 pm = p.matrix();
    const Mat2 el = e - pm.topLeftCorner<2, 2>();
    return q2_closed(1.0, 1.0, el) + 0.5 * k * pm.squaredNorm() + sigma * (pm - p0.matrix()).norm();
}

// Minimum over the lattice of spacing h inside the ball of radius r about 0.
double lattice_minimum(const Mat2& e, const SymDev3& p0, double r, double h, double k, double sigma) {
    const int m = static_cast<int>(std::floor(r / h));
    double best = kInfinity;
    for (int a = -m; a <= m; ++a)
        for (int b = -m; b <= m; ++b)
            for (int c = -m; c <= m; ++c)
                for (int d = -m; d <= m; ++d)
                    for (int f = -m; f <= m; ++f) {
                        if ((a * a + b * b + c * c + d * d + f * f) * h * h > r * r) continue;
                        const SymDev3 q(a * h, b * h, c * h, d * h, f * h);
                        best = std::min(best, prox_oracle(e, p0, q, k, sigma));
                    }
    return best;
}

Outcome prox_oracle_check() {
    const auto t0 = Clock::now();
    const double k = 1.0, sigma = 0.01, h = 0.02;
    const ReducedForm rf(make_isotropic(1, 1));
    const MaterialParams mat{k, sigma, 0.5};
    const auto s = DissipationSpec::von_mises(sigma);
    constexpr int kCases = 100;
    std::vector<Mat2> es(kCases);
    std::vector<SymDev3> p0s(kCases);
    std::mt19937 rng(2);
    std::normal_distribution<double> n01;
    std::uniform_real_distribution<double> mag(0.02, 0.05);
    for (int t = 0; t < kCases; ++t) {
        Mat2 e;
        e << n01(rng), n01(rng), 0, n01(rng);
        e(1, 0) = e(0, 1);
        es[t] = mag(rng) / e.norm() * e;
        SymDev3 p0(n01(rng), n01(rng), n01(rng), n01(rng), n01(rng));
        p0s[t] = (mag(rng) / p0.norm()) * p0;
    }
    std::vector<double> excess(kCases), residual(kCases);
    auto work = [&](int begin, int stride) {
        for (int t = begin; t < kCases; t += stride) {
            const ProxResult r = plastic_prox(rf, mat, s, es[t], p0s[t]);
            const double radius = 3.0 * std::max(es[t].norm(), p0s[t].norm());
            excess[t] = r.objective - lattice_minimum(es[t], p0s[t], radius, h, k, sigma);
            residual[t] = r.residual;
        }
    };
    const int nt = std::max(1u, std::min(8u, std::thread::hardware_concurrency()));
    std::vector<std::thread> pool;
    for (int i = 0; i < nt; ++i) pool.emplace_back(work, i, nt);
    for (auto& th : pool) th.join();
    const double worst = *std::max_element(excess.begin(), excess.end());
    const double res = *std::max_element(residual.begin(), residual.end());
    const double dt = seconds_since(t0);
    return {worst <= 1e-4 && res <= 1e-8 && dt < 60.0, false,
            fmt("max(prox - lattice min) = %.2e (tol 1e-4), max residual = %.2e (tol 1e-8), %.1f s (limit 60 s)", worst,
                res, dt)};
}

// ---------------------------------------------------------------- 3

Mat3 random_traceless(std::mt19937& rng, double norm, bool symmetric) {
    std::normal_distribution<double> n01;
    Mat3 n;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) n(i, j) = n01(rng);
    if (symmetric) n = 0.5 * (n + n.transpose()).eval();
    n -= n.trace() / 3.0 * Mat3::Identity();
    return norm / n.norm() * n;
}

// F = exp(N) with N drawn from M_D; relative deformations F2 F1^-1 in the
// triangle test are generally not symmetric.
Outcome dissipation_bounds() {
    const auto t0 = Clock::now();
    const auto s = DissipationSpec::von_mises(1.0);
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto sample = [&](double max_norm) { return random_traceless(rng, max_norm * u(rng), true).exp().eval(); };
    // Any non-finite value counts as a violation.
    auto excess = [](double lhs, double rhs) { return std::isfinite(lhs) && std::isfinite(rhs) ? lhs - rhs : kInfinity; };
    double bound_excess = -kInfinity, mono_excess = -kInfinity, tri_excess = -kInfinity;
    for (int t = 0; t < 100; ++t) {
        const Mat3 f = sample(0.3);
        const double bound = dissipation_upper_exp(s, f);
        const double d2 = dissipation_path_opt(s, f, 2), d4 = dissipation_path_opt(s, f, 4),
                     d8 = dissipation_path_opt(s, f, 8);
        bound_excess = std::max({bound_excess, excess(d2, bound), excess(d4, bound), excess(d8, bound)});
        mono_excess = std::max({mono_excess, excess(d4, d2), excess(d8, d4)});
    }
    for (int t = 0; t < 100; ++t) {
        const Mat3 f1 = sample(0.15), f2 = sample(0.15), f3 = sample(0.15);
        const double lhs = dissipation_distance(s, f1, f3, 8);
        const double rhs = dissipation_distance(s, f1, f2, 4) + dissipation_distance(s, f2, f3, 4);
        tri_excess = std::max(tri_excess, excess(lhs, rhs));
    }
    const double dt = seconds_since(t0);
    return {bound_excess <= 1e-9 && mono_excess <= 1e-9 && tri_excess <= 1e-9 && dt < 60.0, false,
            fmt("max(path_opt - exp bound) = %.2e, max refinement increase = %.2e, max triangle excess = %.2e "
                "(tol 1e-9 each), %.1f s (limit 60 s)",
                bound_excess, mono_excess, tri_excess, dt)};
}

// ---------------------------------------------------------------- 4

Outcome moment_split() {
    const auto t0 = Clock::now();
    std::mt19937 rng(4);
    std::normal_distribution<double> n01;
    BoundaryData bc;
    bc.u0x.c[1] = 0.01;
    bc.v0.c[3] = 0.02;
    const PlateModel m(PlateGrid(17, 17, 1, 1, {Edge::left, Edge::bottom}, 4), bc, make_isotropic(1, 1),
                       MaterialParams{1, 0.5, 0.5}, DissipationSpec::von_mises(0.5));
    const auto& g = m.grid();
    auto dev = [&](double amp) {
        return SymDev3(amp * n01(rng), amp * n01(rng), amp * n01(rng), amp * n01(rng), amp * n01(rng));
    };
    auto quadratic = [&](std::vector<SymDev3>& p) {
        for (int n = 0; n < g.n_nodes(); ++n) {
            const SymDev3 a = dev(0.05), b = dev(0.05), c = dev(0.05);
            for (int q = 0; q < g.n_x3(); ++q) {
                const double x = g.x3_quad().x[q];
                p[n * g.n_x3() + q] = a + x * b + (x * x - 1.0 / 12.0) * c;
            }
        }
    };
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
        const double alpha = t % 2 == 0 ? 3.0 : 4.0;
        auto st = m.boundary_extension();
        for (int n = 0; n < g.n_nodes(); ++n) {
            if (g.dirichlet_mask()[n]) continue;
            st.ux[n] += 0.01 * n01(rng);
            st.uy[n] += 0.01 * n01(rng);
            st.v[n] += 0.01 * n01(rng);
        }
        auto pf = m.make_plastic_field();
        quadratic(pf.p);
        quadratic(pf.p0);
        const double full = m.eval_J(alpha, st, pf).total;
        worst = std::max(worst, std::abs(eval_J_split(m, alpha, st, pf).total - full) / full);
    }
    const double dt = seconds_since(t0);
    return {worst <= 1e-10 && dt < 10.0, false,
            fmt("max relative split defect = %.2e (tol 1e-10), %.2f s (limit 10 s)", worst, dt)};
}

// ---------------------------------------------------------------- 5, 6, 8

PlateModel reduction_model(int nodes, std::vector<Edge> edges, const BoundaryData& bc) {
    return PlateModel(PlateGrid(nodes, nodes, 1, 1, std::move(edges)), bc, make_isotropic(1, 1),
                      MaterialParams{1, 0.1, 0.5}, DissipationSpec::von_mises(0.1));
}

std::vector<SymDev3> profile_p0(const PlateGrid& g, bool linear) {
    std::vector<SymDev3> p0(g.n_nodes() * g.n_x3());
    for (int n = 0; n < g.n_nodes(); ++n)
        for (int q = 0; q < g.n_x3(); ++q) p0[n * g.n_x3() + q] = (linear ? g.x3_quad().x[q] : 1.0) * (0.2 * kN);
    return p0;
}

SolverOptions certificate_options() {
    SolverOptions opt;
    opt.tol = 1e-13;
    return opt;
}

std::vector<ReductionReport> membrane_runs, bending_runs;

Outcome membrane_reduction() {
    const auto t0 = Clock::now();
    for (int nodes : {17, 33}) {
        const auto m = reduction_model(nodes, {Edge::left}, BoundaryData{});
        membrane_runs.push_back(check_membrane_reduction(m, 4.0, profile_p0(m.grid(), false), certificate_options()));
    }
    const double dt = seconds_since(t0);
    const auto &c = membrane_runs[0], &f = membrane_runs[1];
    // Both gaps at the roundoff floor count as refinement-consistent.
    const bool refine = f.rel_gap <= c.rel_gap / 3.0 || (c.rel_gap <= 1e-12 && f.rel_gap <= 1e-12);
    return {f.rel_gap <= 1e-5 && f.v_inf <= 1e-8 && f.x3_variation <= 1e-8 && refine && dt < 300.0, false,
            fmt("32x32: gap %.2e (tol 1e-5), |v|inf %.2e (tol 1e-8), x3-variation %.2e (tol 1e-8); 16x16 gap %.2e, "
                "refinement %s (factor 3 or both <= 1e-12); %.1f s (limit 300 s)",
                f.rel_gap, f.v_inf, f.x3_variation, c.rel_gap, refine ? "ok" : "not ok", dt)};
}

Outcome bending_reduction() {
    const auto t0 = Clock::now();
    BoundaryData bc;
    bc.v0.c[3] = 0.05;  // x^2
    bc.v0.c[5] = 0.05;  // y^2
    for (int nodes : {17, 33}) {
        const auto m = reduction_model(nodes, kAllEdges, bc);
        bending_runs.push_back(check_bending_reduction(m, 4.0, profile_p0(m.grid(), true), certificate_options()));
    }
    const double dt = seconds_since(t0);
    const auto &c = bending_runs[0], &f = bending_runs[1];
    return {f.rel_gap <= 1e-4 && f.rel_gap < c.rel_gap && dt < 300.0, false,
            fmt("32x32: gap %.4e (tol 1e-4); 16x16 gap %.4e (must decrease); min J %.10g, min J_hat/12 %.10g; "
                "%.1f s (limit 300 s)",
                f.rel_gap, c.rel_gap, f.min_full, f.min_reduced, dt)};
}

Outcome solver_certificates() {
    const auto t0 = Clock::now();
    int violations = 0;
    double worst_terminal = 0.0;
    for (const auto* runs : {&membrane_runs, &bending_runs})
        for (const auto& r : *runs)
            for (const SolveReport* s : {&r.full, &r.reduced}) {
                violations += s->monotone_violations;
                worst_terminal = std::max(worst_terminal, s->terminal_improvement);
            }
    // alpha = 3 critical point on the von Karman scenario of configs/von_karman.ini.
    BoundaryData bc;
    bc.v0.c[1] = 0.02;
    bc.v0.c[3] = 0.02;
    const PlateModel m(PlateGrid(17, 17, 1, 1, {Edge::left, Edge::right}), bc, make_isotropic(1, 1),
                       MaterialParams{1, 0.5, 0.5}, DissipationSpec::von_mises(0.5));
    auto st = m.boundary_extension();
    auto pf = m.make_plastic_field();
    for (auto& p : pf.p0) p = 0.05 * kN;
    pf.p = pf.p0;
    const auto vk = minimize_vk(m, st, pf);
    const bool have_runs = membrane_runs.size() == 2 && bending_runs.size() == 2;
    const double dt = seconds_since(t0);
    return {have_runs && violations == 0 && worst_terminal < 1e-12 && vk.grad_norm <= 1e-6, false,
            fmt("alpha=4 (criterion 5/6 runs): %d monotonicity violations, max terminal improvement %.2e (tol 1e-12); "
                "alpha=3: gradient norm %.2e (tol 1e-6); %.1f s",
                violations, worst_terminal, vk.grad_norm, dt)};
}

// ---------------------------------------------------------------- 7

Outcome limsup_convergence() {
    const auto t0 = Clock::now();
    const PlateModel m(PlateGrid(33, 33, 1, 1, kAllEdges), BoundaryData{}, make_isotropic(1, 1),
                       MaterialParams{1, 0.5, 0.5}, DissipationSpec::von_mises(0.5));
    const Grid3D g3(m.grid(), 9);
    const auto& g = m.grid();
    auto st = m.boundary_extension();
    auto pf = m.make_plastic_field();
    // Smooth triple vanishing to second order on the boundary.
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            const double x = g.x(i), y = g.y(j);
            const double phi = std::pow(std::sin(M_PI * x) * std::sin(M_PI * y), 2);
            const int n = g.node(i, j);
            st.ux[n] = 0.1 * phi;
            st.uy[n] = 0.05 * phi * x;
            st.v[n] = 0.1 * phi;
            for (int q = 0; q < g.n_x3(); ++q) {
                const double x3 = g.x3_quad().x[q];
                pf.at(n, q) = phi * (SymDev3(0.5, 0, 0, 0, 0) + x3 * SymDev3(0, 0.5, 0, 0.2, 0));
                pf.at0(n, q) = SymDev3(0, 0, 0.05, 0, 0);
            }
        }
    bool pass = true;
    std::string detail;
    for (double alpha : {3.0, 4.0}) {
        const auto tab = convergence_study(m, g3, st, pf, alpha, {0.1, 0.05, 0.025, 0.0125});
        const auto& rows = tab.rows;
        const auto& last = rows.back();
        bool mono = true;
        for (std::size_t i = rows.size() - 2; i < rows.size(); ++i)
            mono = mono && std::abs(rows[i].ratio_total_2d - 1) <= std::abs(rows[i - 1].ratio_total_2d - 1);
        const bool ok = std::abs(last.ratio_total_2d - 1) <= 0.05 && mono &&
                        std::abs(last.ratio_hardening - 1) <= 0.02 && tab.dissipation_bound_holds;
        pass = pass && ok;
        detail += fmt("alpha=%g: ratio %.5f (tol 5%%; same-grid %.5f), |ratio-1| %snonincreasing, hardening ratio "
                      "%.6f (tol 2%%), dissipation bound %s with C=%.3g; ",
                      alpha, last.ratio_total_2d, last.ratio_total, mono ? "" : "not ", last.ratio_hardening,
                      tab.dissipation_bound_holds ? "holds" : "fails", tab.dissipation_constant);
    }
    const double dt = seconds_since(t0);
    pass = pass && dt < 600.0;
    return {pass, false, detail + fmt("%.1f s (limit 600 s)", dt)};
}

// ---------------------------------------------------------------- 9

Outcome coarse_3d() {
    const auto t0 = Clock::now();
    const auto m = reduction_model(9, {Edge::left}, BoundaryData{});
    const auto p0 = profile_p0(m.grid(), false);
    auto st = m.boundary_extension();
    auto pf = m.make_plastic_field();
    pf.p0 = p0;
    pf.p = p0;
    const double limit = minimize_linear(m, 4.0, st, pf, certificate_options()).energy.total;
    const auto r = solve_3d(m, Grid3D(m.grid(), 5), p0, 4.0, 0.05);
    const double rel = (r.energy.energy.total - limit) / std::abs(limit);
    return {true, true,
            fmt("8x8x5, eps 0.05: 3D %.8g vs 2D %.8g, relative difference %.3e (reference 25%%, %s), %d outer "
                "iterations, %.1f s",
                r.energy.energy.total, limit, rel, std::abs(rel) <= 0.25 ? "within" : "outside", r.iterations,
                seconds_since(t0))};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::vector<int> known, only;
    app.add_option("--known-failures", known, "Criteria whose failure does not change the exit status");
    app.add_option("--only", only, "Run only these criteria (8 also runs 5 and 6)");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"tensor reduction oracle", tensor_reduction},
        {"prox lattice oracle", prox_oracle_check},
        {"dissipation bounds", dissipation_bounds},
        {"moment-split identity", moment_split},
        {"membrane reduction", membrane_reduction},
        {"bending reduction", bending_reduction},
        {"recovery sequence convergence", limsup_convergence},
        {"solver certificates", solver_certificates},
        {"coarse 3D minimization (not gated)", coarse_3d},
    };
    std::set<int> wanted(only.begin(), only.end());
    if (wanted.count(8)) wanted.insert({5, 6});
    const std::set<int> known_set(known.begin(), known.end());
    int unexpected = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!wanted.empty() && !wanted.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, false, std::string("exception: ") + e.what()};
        }
        const char* tag = o.informational ? "INFO" : o.pass ? "PASS" : known_set.count(id) ? "FAIL (known)" : "FAIL";
        std::printf("[%s] %d %s: %s\n", tag, id, criteria[i].first.c_str(), o.detail.c_str());
        std::fflush(stdout);
        if (!o.pass && !known_set.count(id)) ++unexpected;
    }
    return unexpected == 0 ? 0 : 1;
}
