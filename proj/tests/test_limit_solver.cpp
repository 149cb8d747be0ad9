#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "plateplast/errors.hpp"
#include "plateplast/limit_solver.hpp"

using namespace plateplast;

namespace {

const SymDev3 kN(1, 0, 0, 0, 0);  // diag(1, -1, 0) / sqrt 2

PlateModel make_model(int n, std::vector<Edge> edges, BoundaryData bc = {}, double k = 1.0, double sigma = 0.5,
                      double lambda = 1.0, double mu = 1.0) {
    return PlateModel(PlateGrid(n, n, 1.0, 1.0, std::move(edges)), bc, make_isotropic(lambda, mu),
                      MaterialParams{k, sigma, 0.5}, DissipationSpec::von_mises(sigma));
}

Poly2 poly(std::initializer_list<std::pair<int, double>> terms) {
    Poly2 p;
    for (auto [i, c] : terms) p.c[i] = c;
    return p;
}

// Random admissible state: boundary extension plus noise on free nodes.
DisplacementState random_state(const PlateModel& m, std::mt19937& rng, double amp) {
    std::normal_distribution<double> n01;
    DisplacementState st = m.boundary_extension();
    for (int n = 0; n < m.grid().n_nodes(); ++n) {
        if (m.grid().dirichlet_mask()[n]) continue;
        st.ux[n] += amp * n01(rng);
        st.uy[n] += amp * n01(rng);
        st.v[n] += amp * n01(rng);
    }
    return st;
}

void random_plastic(PlasticField& pf, std::mt19937& rng, double amp) {
    std::normal_distribution<double> n01;
    for (auto& p : pf.p) p = SymDev3(amp * n01(rng), amp * n01(rng), amp * n01(rng), amp * n01(rng), amp * n01(rng));
    for (auto& p : pf.p0) p = SymDev3(amp * n01(rng), amp * n01(rng), amp * n01(rng), amp * n01(rng), amp * n01(rng));
}

}  // namespace

TEST(Grid, QuadratureMoments) {
    for (int n : {2, 3, 4, 5, 6}) {
        const auto q = gauss_legendre_half(n);
        double s0 = 0, s2 = 0;
        for (int i = 0; i < n; ++i) {
            s0 += q.w[i];
            s2 += q.w[i] * q.x[i] * q.x[i];
        }
        EXPECT_NEAR(s0, 1.0, 1e-15);
        EXPECT_NEAR(s2, 1.0 / 12.0, 1e-14);
    }
}

TEST(Grid, AreasAndMask) {
    const PlateGrid g(5, 4, 2.0, 1.5, {Edge::left, Edge::top});
    double a = 0;
    for (double x : g.node_area()) a += x;
    EXPECT_NEAR(a, 3.0, 1e-14);
    EXPECT_TRUE(g.dirichlet_mask()[g.node(0, 1)]);
    EXPECT_TRUE(g.dirichlet_mask()[g.node(3, 3)]);
    EXPECT_FALSE(g.dirichlet_mask()[g.node(4, 0)]);
}

TEST(Grid, RejectsBadInput) {
    EXPECT_THROW(PlateGrid(5, 5, 1, 1, {}), ConfigError);
    EXPECT_THROW(PlateGrid(2, 5, 1, 1, {Edge::left}), ConfigError);
    EXPECT_THROW(PlateGrid(5, 5, -1, 1, {Edge::left}), ConfigError);
}

TEST(BoundaryData, AnalyticGradient) {
    BoundaryData bc;
    bc.v0 = poly({{1, 0.3}, {4, -0.2}, {6, 0.1}, {8, 0.05}});
    EXPECT_LT(bc.gradient_consistency(1.0, 1.0), 1e-6);
}

TEST(EvalJ, ZeroState) {
    const auto m = make_model(6, {Edge::left});
    const auto st = m.boundary_extension();
    const auto pf = m.make_plastic_field();
    EXPECT_EQ(m.eval_J(4.0, st, pf).total, 0.0);
}

TEST(EvalJ, ConstantPlasticStrain) {
    const auto m = make_model(9, {Edge::left});
    auto pf = m.make_plastic_field();
    for (auto& p : pf.p) p = kN;
    const auto e = m.eval_J(4.0, m.boundary_extension(), pf);
    EXPECT_NEAR(e.elastic_2d, 1.0, 1e-13);
    EXPECT_NEAR(e.hardening, 0.5, 1e-13);
    EXPECT_NEAR(e.dissipation, 0.5, 1e-13);
    EXPECT_NEAR(e.total, 2.0, 1e-13);
}

TEST(EvalJ, VonKarmanTermVanishesForFlatPlate) {
    BoundaryData bc;
    bc.u0x = poly({{1, 0.01}, {2, 0.02}});
    const auto m = make_model(7, {Edge::left, Edge::bottom}, bc);
    std::mt19937 rng(1);
    auto st = random_state(m, rng, 0.01);
    st.v.setZero();
    auto pf = m.make_plastic_field();
    random_plastic(pf, rng, 0.05);
    EXPECT_EQ(m.eval_J(3.0, st, pf).total, m.eval_J(4.0, st, pf).total);
}

TEST(EvalJ, PartsSumToTotal) {
    const auto m = make_model(7, {Edge::left});
    std::mt19937 rng(2);
    const auto st = random_state(m, rng, 0.02);
    auto pf = m.make_plastic_field();
    random_plastic(pf, rng, 0.1);
    const auto e = m.eval_J(3.0, st, pf);
    EXPECT_NEAR(e.total, e.elastic_2d + e.hardening + e.dissipation, 1e-12 * std::abs(e.total));
}

TEST(EvalJ, AdmissibilityError) {
    BoundaryData bc;
    bc.v0 = poly({{0, 0.1}});
    const auto m = make_model(6, {Edge::right});
    auto st = m.boundary_extension();
    st.v[m.grid().node(5, 2)] = 0.3;
    EXPECT_THROW(m.eval_J(4.0, st, m.make_plastic_field()), AdmissibilityError);
}

TEST(EvalJ, QuadraticDeflectionCurvatureIsExact) {
    BoundaryData bc;
    bc.v0 = poly({{3, 0.5}, {4, -0.3}, {5, 0.2}, {1, 0.1}});
    const auto m = make_model(8, {Edge::left, Edge::right, Edge::bottom, Edge::top}, bc);
    const auto h = m.curvature(m.boundary_extension().v);
    const Mandel3 ref = to_mandel(bc.v0.hess(0, 0));
    for (const auto& x : h) EXPECT_LT((x - ref).norm(), 1e-11);
}

TEST(EvalJ, FreeEdgeCurvatureExactForQuadratics) {
    BoundaryData bc;
    bc.v0 = poly({{3, 0.5}, {4, -0.3}, {5, 0.2}});
    const auto m = make_model(8, {Edge::left}, bc);
    const auto h = m.curvature(m.boundary_extension().v);
    const Mandel3 ref = to_mandel(bc.v0.hess(0, 0));
    for (const auto& x : h) EXPECT_LT((x - ref).norm(), 1e-10);
}

TEST(EvalJ, GradientMatchesFiniteDifferences) {
    BoundaryData bc;
    bc.u0x = poly({{1, 0.01}});
    bc.v0 = poly({{3, 0.05}, {2, 0.02}});
    const auto m = make_model(7, {Edge::left, Edge::bottom}, bc);
    std::mt19937 rng(9);
    std::normal_distribution<double> n01;
    for (double alpha : {3.0, 4.0}) {
        for (int t = 0; t < 3; ++t) {
            const auto st = random_state(m, rng, 0.05);
            auto pf = m.make_plastic_field();
            random_plastic(pf, rng, 0.05);
            const auto g = m.grad_J(alpha, st, pf);
            DisplacementState dir = DisplacementState::zeros(m.grid().n_nodes());
            for (int n = 0; n < m.grid().n_nodes(); ++n)
                if (!m.grid().dirichlet_mask()[n]) dir.ux[n] = n01(rng), dir.uy[n] = n01(rng), dir.v[n] = n01(rng);
            const double analytic = g.ux.dot(dir.ux) + g.uy.dot(dir.uy) + g.v.dot(dir.v);
            const double h = 1e-5;
            auto shifted = [&](double s) {
                DisplacementState x = st;
                x.ux += s * dir.ux;
                x.uy += s * dir.uy;
                x.v += s * dir.v;
                return m.eval_J(alpha, x, pf).elastic_2d;
            };
            const double fd = (shifted(h) - shifted(-h)) / (2 * h);
            EXPECT_NEAR(analytic, fd, 1e-6 * std::abs(fd)) << "alpha " << alpha;
        }
    }
}

TEST(EvalJ, MidpointConvexityLinearRegime) {
    BoundaryData bc;
    bc.v0 = poly({{3, 0.1}});
    const auto m = make_model(7, {Edge::left, Edge::right}, bc);
    std::mt19937 rng(12);
    for (int t = 0; t < 10; ++t) {
        const auto a = random_state(m, rng, 0.05), b = random_state(m, rng, 0.05);
        auto pa = m.make_plastic_field(), pb = m.make_plastic_field();
        random_plastic(pa, rng, 0.1);
        random_plastic(pb, rng, 0.1);
        pb.p0 = pa.p0;
        DisplacementState mid{0.5 * (a.ux + b.ux), 0.5 * (a.uy + b.uy), 0.5 * (a.v + b.v)};
        PlasticField pm = pa;
        for (std::size_t i = 0; i < pm.p.size(); ++i) pm.p[i] = 0.5 * (pa.p[i] + pb.p[i]);
        const double lhs = m.eval_J(4.0, mid, pm).total;
        const double rhs = 0.5 * (m.eval_J(4.0, a, pa).total + m.eval_J(4.0, b, pb).total);
        EXPECT_LE(lhs, rhs + 1e-10);
    }
}

TEST(EvalJ, SecondOrderConsistency) {
    // Smooth manufactured fields; the reference integral uses a 12-point
    // tensor Gauss rule in x', exact x3 moments, and the closed Q2 formula.
    BoundaryData bc;
    bc.u0x = poly({{1, 0.02}, {5, 0.03}, {7, -0.01}});
    bc.u0y = poly({{2, -0.01}, {3, 0.02}, {4, 0.01}});
    bc.v0 = poly({{3, 0.04}, {6, 0.03}, {8, -0.02}});
    auto pfield = [](double x, double y, double x3) {
        return SymDev3(0.05 * std::sin(x) + 0.1 * x3 * std::cos(y), 0.02 * x * y, 0.03 * x3 * x3, 0.01 * y, 0.0);
    };
    const double lambda = 1.0, mu = 1.0, k = 1.0, sigma = 0.5;
    auto q2c = [&](const Mat2& s) {
        return mu * s.squaredNorm() + mu * lambda / (lambda + 2 * mu) * s.trace() * s.trace();
    };
    const auto gl = gauss_legendre_half(12);
    const auto gz = gauss_legendre_half(6);
    double ref = 0;
    for (int a = 0; a < 12; ++a)
        for (int b = 0; b < 12; ++b) {
            const double x = gl.x[a] + 0.5, y = gl.x[b] + 0.5, w = gl.w[a] * gl.w[b];
            const Vec2 gux = bc.u0x.grad(x, y), guy = bc.u0y.grad(x, y);
            Mat2 e;
            e << gux[0], 0.5 * (gux[1] + guy[0]), 0.5 * (gux[1] + guy[0]), guy[1];
            const Mat2 h = bc.v0.hess(x, y);
            for (int c = 0; c < 6; ++c) {
                const SymDev3 p = pfield(x, y, gz.x[c]);
                const Mat2 el = e - gz.x[c] * h - p.matrix().topLeftCorner<2, 2>();
                ref += w * gz.w[c] * (q2c(el) + 0.5 * k * p.norm() * p.norm() + sigma * p.norm());
            }
        }
    std::vector<double> err;
    for (int n : {9, 17, 33}) {
        const auto m = make_model(n, {Edge::left}, bc, k, sigma, lambda, mu);
        auto pf = m.make_plastic_field();
        const auto& q = m.grid().x3_quad();
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                for (int c = 0; c < m.grid().n_x3(); ++c)
                    pf.at(m.grid().node(i, j), c) = pfield(m.grid().x(i), m.grid().y(j), q.x[c]);
        err.push_back(std::abs(m.eval_J(4.0, m.boundary_extension(), pf).total - ref));
    }
    EXPECT_GT(err[0] / err[1], 3.0);
    EXPECT_GT(err[1] / err[2], 3.0);
}

TEST(MinimizeLinear, TrivialData) {
    const auto m = make_model(7, {Edge::left}, {}, 1.0, 1e6);
    DisplacementState st;
    PlasticField pf;
    const auto rep = minimize_linear(m, 4.0, st, pf);
    EXPECT_TRUE(rep.converged);
    EXPECT_EQ(rep.energy.total, 0.0);
    EXPECT_EQ(st.v.norm(), 0.0);
}

TEST(MinimizeLinear, RejectsVonKarmanExponent) {
    const auto m = make_model(5, {Edge::left});
    DisplacementState st;
    PlasticField pf;
    EXPECT_THROW(minimize_linear(m, 3.0, st, pf), HypothesisError);
}

TEST(MinimizeLinear, UniaxialStretchMatchesElasticSolve) {
    // Lateral contraction -e11/4 is stress free for isotropic(1,1): Q2 = 1.25 e11^2.
    BoundaryData bc;
    bc.u0x = poly({{1, 0.01}});
    bc.u0y = poly({{2, -0.0025}});
    const auto m = make_model(9, {Edge::left, Edge::right}, bc, 1.0, 1e6);
    DisplacementState st;
    PlasticField pf;
    const auto rep = minimize_linear(m, 4.0, st, pf);
    EXPECT_TRUE(rep.converged);
    for (const auto& p : pf.p) EXPECT_EQ(p.norm(), 0.0);
    EXPECT_NEAR(rep.energy.total, 1.25e-4, 1e-14);

    DisplacementState st2;
    PlasticField pf2;
    SolverOptions frozen;
    frozen.freeze_plastic = true;
    const auto rep2 = minimize_linear(m, 4.0, st2, pf2, frozen);
    EXPECT_NEAR(rep.energy.total, rep2.energy.total, 1e-15);
}

TEST(MinimizeLinear, MonotoneTraceAndCertificates) {
    BoundaryData bc;
    bc.u0x = poly({{1, 0.05}});
    bc.v0 = poly({{3, 0.2}, {5, -0.1}});
    const auto m = make_model(9, {Edge::left, Edge::right}, bc, 1.0, 0.05);
    DisplacementState st;
    PlasticField pf = m.make_plastic_field();
    for (auto& p : pf.p0) p = 0.1 * kN;
    const auto rep = minimize_linear(m, 4.0, st, pf);
    EXPECT_TRUE(rep.converged);
    EXPECT_EQ(rep.monotone_violations, 0);
    for (std::size_t i = 1; i < rep.energy_trace.size(); ++i)
        EXPECT_LE(rep.energy_trace[i], rep.energy_trace[i - 1] * (1 + 1e-13));
    EXPECT_LE(rep.max_prox_residual, 1e-8);
    EXPECT_LT(std::abs(rep.terminal_improvement), 1e-9);
    // Plastic flow happened and the optimum beats the starting point.
    EXPECT_LT(rep.energy.total, rep.energy_trace.front());
}

TEST(MinimizeVk, TrivialData) {
    const auto m = make_model(7, {Edge::left});
    DisplacementState st;
    PlasticField pf;
    SolverOptions opt;
    opt.n_restarts = 1;
    const auto rep = minimize_vk(m, st, pf, opt);
    EXPECT_TRUE(rep.converged);
    EXPECT_EQ(rep.energy.total, 0.0);
}

TEST(MinimizeVk, SmallDeflectionMatchesLinearSolver) {
    BoundaryData bc;
    bc.v0 = poly({{1, 2e-5}, {3, 2e-5}});
    const auto m = make_model(9, {Edge::left, Edge::right}, bc);
    SolverOptions opt;
    opt.freeze_plastic = true;
    opt.n_restarts = 1;
    DisplacementState a, b;
    PlasticField pa, pb;
    const auto lin = minimize_linear(m, 4.0, a, pa, opt);
    const auto vk = minimize_vk(m, b, pb, opt);
    EXPECT_TRUE(vk.converged);
    for (const auto& g : m.slope(b.v)) EXPECT_LE(g.norm(), 1e-4);
    EXPECT_GT(lin.energy.total, 1e-12);
    EXPECT_NEAR(vk.energy.total, lin.energy.total, 1e-6 * lin.energy.total);
}

TEST(MinimizeVk, BeatsBoundaryExtension) {
    BoundaryData bc;
    bc.u0x = poly({{1, -0.01}});
    bc.v0 = poly({{3, 0.1}, {1, 0.05}});
    const auto m = make_model(9, {Edge::left, Edge::right}, bc, 1.0, 0.05);
    PlasticField pf = m.make_plastic_field();
    for (auto& p : pf.p0) p = 0.05 * kN;
    PlasticField base = pf;
    base.p = base.p0;
    const double baseline = m.eval_J(3.0, m.boundary_extension(), base).total;
    DisplacementState st;
    SolverOptions opt;
    opt.n_restarts = 2;
    const auto rep = minimize_vk(m, st, pf, opt);
    EXPECT_LE(rep.energy.total, baseline);
    EXPECT_LE(rep.grad_norm, 1e-6);
    EXPECT_EQ(rep.restart_energies.size(), 2u);
}
