#include "plateplast/three_d.hpp"

#include <algorithm>
#include <cmath>

#include <ceres/gradient_problem.h>
#include <ceres/gradient_problem_solver.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "plateplast/errors.hpp"
#include "plateplast/parallel.hpp"

namespace plateplast {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

// Second-order first derivative along a line of n points with spacing h.
void line_stencil(Triplets& t, int n, double h, const std::function<int(int)>& idx) {
    const double c = 1.0 / (2.0 * h);
    for (int i = 0; i < n; ++i) {
        const int row = idx(i);
        if (i == 0) {
            t.emplace_back(row, idx(0), -3 * c);
            t.emplace_back(row, idx(1), 4 * c);
            t.emplace_back(row, idx(2), -c);
        } else if (i == n - 1) {
            t.emplace_back(row, idx(n - 1), 3 * c);
            t.emplace_back(row, idx(n - 2), -4 * c);
            t.emplace_back(row, idx(n - 3), c);
        } else {
            t.emplace_back(row, idx(i + 1), c);
            t.emplace_back(row, idx(i - 1), -c);
        }
    }
}

double scale_t(double alpha, double eps) { return std::pow(eps, alpha - 1.0); }

// Nodal field of 3-vectors as three component vectors.
std::array<Eigen::VectorXd, 3> components(const std::vector<Vec3>& y) {
    std::array<Eigen::VectorXd, 3> c;
    for (auto& v : c) v.resize(static_cast<Eigen::Index>(y.size()));
    for (std::size_t n = 0; n < y.size(); ++n)
        for (int a = 0; a < 3; ++a) c[a][static_cast<Eigen::Index>(n)] = y[n][a];
    return c;
}

// Displacement gradient grad_eps (y - (x', eps x3)) at every node.
std::vector<Mat3> displacement_gradient(const Grid3D& g, const Deformation3D& def) {
    const auto ref = identity_plate(g, def.epsilon);
    std::vector<Vec3> w(def.y.size());
    for (std::size_t n = 0; n < w.size(); ++n) w[n] = def.y[n] - ref.y[n];
    const auto c = components(w);
    std::vector<Mat3> h(w.size());
    for (int j = 0; j < 3; ++j) {
        const double s = j == 2 ? 1.0 / def.epsilon : 1.0;
        for (int a = 0; a < 3; ++a) {
            const Eigen::VectorXd col = s * (g.diff(j) * c[a]);
            for (std::size_t n = 0; n < w.size(); ++n) h[n](a, j) = col[static_cast<Eigen::Index>(n)];
        }
    }
    return h;
}

Mat3 svk_strain(const Mat3& h) { return 0.5 * (h + h.transpose() + h.transpose() * h); }

// Elastic displacement gradient (Id + H) P^-1 - Id with P^-1 = Id + m.
Mat3 elastic_disp(const Mat3& h, const Mat3& m) { return h + m + h * m; }

struct NodeEnergy {
    double el = 0, hard = 0, diss = 0;
    int bad_det = 0, out_k = 0, nonsym = 0;
};

NodeEnergy node_energy(double alpha, double eps, const ElasticTensor& c, const MaterialParams& m,
                       const DissipationSpec& s, const Mat3& h, const Mat3& p, const Mat3& p0) {
    const double t = scale_t(alpha, eps);
    NodeEnergy e;
    if (!((Mat3::Identity() + h).determinant() > 0.0)) e.bad_det = 1;
    const Mat3 pinv = p.inverse();
    e.el = w_el_svk_disp(c, elastic_disp(h, pinv - Mat3::Identity())) / (t * t);
    const double wh = w_hard(m, p);
    if (!std::isfinite(wh)) e.out_k = 1;
    e.hard = wh / (t * t);
    const Mat3 rel = p * p0.inverse();
    if ((rel - Mat3::Identity()).norm() >= 1.0) {
        e.diss = kInfinity;
        return e;
    }
    const Mat3 l = rel.log();
    if (0.5 * (l - l.transpose()).norm() > 1e-13 + 1e-9 * l.norm()) e.nonsym = 1;
    e.diss = h_d(s, SymDev3::project(l)) / t;
    return e;
}

// Lagrange basis of the Gauss points evaluated at each x3 node: L(k, q).
Eigen::MatrixXd lagrange_matrix(const Grid3D& g) {
    const auto& gq = g.plate().x3_quad();
    const int nq = static_cast<int>(gq.x.size());
    Eigen::MatrixXd l(g.nz(), nq);
    for (int k = 0; k < g.nz(); ++k)
        for (int q = 0; q < nq; ++q) {
            double v = 1.0;
            for (int r = 0; r < nq; ++r)
                if (r != q) v *= (g.z()[k] - gq.x[r]) / (gq.x[q] - gq.x[r]);
            l(k, q) = v;
        }
    return l;
}

// In-plane difference gradients of the 2D displacement state.
struct PlaneFields {
    std::vector<Mat2> du;  // du_a / dx_b
    std::vector<Vec2> g;   // grad v
    std::vector<Mat2> dg;  // dg_a / dx_b
};

PlaneFields plane_fields(const Grid3D& g, const DisplacementState& st) {
    const int nn = g.plate().n_nodes();
    PlaneFields f;
    f.du.resize(nn);
    f.g.resize(nn);
    f.dg.resize(nn);
    const Eigen::VectorXd g1 = g.diff2d(0) * st.v, g2 = g.diff2d(1) * st.v;
    const Eigen::VectorXd u11 = g.diff2d(0) * st.ux, u12 = g.diff2d(1) * st.ux;
    const Eigen::VectorXd u21 = g.diff2d(0) * st.uy, u22 = g.diff2d(1) * st.uy;
    const Eigen::VectorXd h11 = g.diff2d(0) * g1, h12 = g.diff2d(1) * g1;
    const Eigen::VectorXd h21 = g.diff2d(0) * g2, h22 = g.diff2d(1) * g2;
    for (int n = 0; n < nn; ++n) {
        f.du[n] << u11[n], u12[n], u21[n], u22[n];
        f.g[n] = Vec2(g1[n], g2[n]);
        f.dg[n] << h11[n], h12[n], h21[n], h22[n];
    }
    return f;
}

// In-plane strain of the limit model at height x3.
Mat2 limit_strain(const PlaneFields& f, int n, double x3, double alpha) {
    Mat2 e = sym(f.du[n]) - x3 * sym(f.dg[n]);
    if (alpha <= 3.0) e += 0.5 * f.g[n] * f.g[n].transpose();
    return e;
}

void check_sizes(const PlateModel& model, const Grid3D& g, const DisplacementState& st, const PlasticField& pf) {
    const auto& a = model.grid();
    const auto& b = g.plate();
    if (a.nx() != b.nx() || a.ny() != b.ny() || a.n_x3() != b.n_x3())
        throw Error("3D grid footprint does not match the plate model");
    if (static_cast<int>(st.v.size()) != a.n_nodes() || static_cast<int>(pf.p.size()) != a.n_nodes() * a.n_x3())
        throw Error("state does not match the plate model");
}

double ratio(double value, double limit) {
    if (limit == 0.0) return value == 0.0 ? 1.0 : kInfinity;
    return value / limit;
}

}  // namespace

Grid3D::Grid3D(PlateGrid footprint, int nz) : plate_(std::move(footprint)), nz_(nz) {
    if (nz < 3 || nz % 2 == 0) throw ConfigError({"nz must be odd and at least 3"});
    const double hz = 1.0 / (nz - 1);
    z_.resize(nz);
    wz_.resize(nz);
    for (int k = 0; k < nz; ++k) {
        z_[k] = -0.5 + k * hz;
        wz_[k] = hz / 3.0 * (k == 0 || k == nz - 1 ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0));
    }
    const int nx = plate_.nx(), ny = plate_.ny(), n2 = plate_.n_nodes();
    w_.resize(static_cast<std::size_t>(n2) * nz);
    for (int n = 0; n < n2; ++n)
        for (int k = 0; k < nz; ++k) w_[index(n, k)] = plate_.node_area()[n] * wz_[k];

    Triplets t0, t1, t2, s0, s1;
    for (int j = 0; j < ny; ++j)
        for (int k = 0; k < nz; ++k)
            line_stencil(t0, nx, plate_.hx(), [&](int i) { return index(plate_.node(i, j), k); });
    for (int i = 0; i < nx; ++i)
        for (int k = 0; k < nz; ++k)
            line_stencil(t1, ny, plate_.hy(), [&](int j) { return index(plate_.node(i, j), k); });
    for (int n = 0; n < n2; ++n) line_stencil(t2, nz, hz, [&](int k) { return index(n, k); });
    for (int j = 0; j < ny; ++j) line_stencil(s0, nx, plate_.hx(), [&](int i) { return plate_.node(i, j); });
    for (int i = 0; i < nx; ++i) line_stencil(s1, ny, plate_.hy(), [&](int j) { return plate_.node(i, j); });
    const int n3 = n_nodes();
    Triplets* ts[3] = {&t0, &t1, &t2};
    for (int a = 0; a < 3; ++a) {
        d_[a].resize(n3, n3);
        d_[a].setFromTriplets(ts[a]->begin(), ts[a]->end());
    }
    d2_[0].resize(n2, n2);
    d2_[0].setFromTriplets(s0.begin(), s0.end());
    d2_[1].resize(n2, n2);
    d2_[1].setFromTriplets(s1.begin(), s1.end());
}

double w_el_svk(const ElasticTensor& c, const Mat3& f) {
    return c.quad_form(0.5 * (f.transpose() * f - Mat3::Identity()));
}

double w_el_svk_disp(const ElasticTensor& c, const Mat3& h) { return c.quad_form(svk_strain(h)); }

Vec3 boundary_datum(const BoundaryData& bc, double alpha, double epsilon, double x1, double x2, double x3) {
    const double a1 = std::pow(epsilon, alpha - 1.0), a2 = std::pow(epsilon, alpha - 2.0);
    const Vec2 u0 = bc.u0(x1, x2);
    const Vec2 gv = bc.grad_v0(x1, x2);
    return Vec3(x1 + a1 * u0[0] - a1 * x3 * gv[0], x2 + a1 * u0[1] - a1 * x3 * gv[1],
                epsilon * x3 + a2 * bc.v0(x1, x2));
}

Deformation3D datum_field(const Grid3D& g, const BoundaryData& bc, double alpha, double epsilon) {
    Deformation3D d{epsilon, std::vector<Vec3>(g.n_nodes())};
    const auto& pg = g.plate();
    for (int j = 0; j < pg.ny(); ++j)
        for (int i = 0; i < pg.nx(); ++i)
            for (int k = 0; k < g.nz(); ++k)
                d.y[g.index(pg.node(i, j), k)] = boundary_datum(bc, alpha, epsilon, pg.x(i), pg.y(j), g.z()[k]);
    return d;
}

Deformation3D identity_plate(const Grid3D& g, double epsilon) {
    return datum_field(g, BoundaryData{}, 3.0, epsilon);
}

Energy3D energy_3d(double alpha, const ElasticTensor& c, const MaterialParams& m, const DissipationSpec& s,
                   const Grid3D& g, const Deformation3D& def, const PlasticStrain3D& ps) {
    const int n3 = g.n_nodes();
    if (static_cast<int>(def.y.size()) != n3 || static_cast<int>(ps.P.size()) != n3 ||
        static_cast<int>(ps.P0.size()) != n3)
        throw Error("3D fields do not match the grid");
    if (!(def.epsilon > 0.0)) throw Error("epsilon must be positive");
    const auto h = displacement_gradient(g, def);
    std::vector<NodeEnergy> ne(n3);
    parallel_for(n3, [&](std::size_t b, std::size_t e) {
        for (std::size_t n = b; n < e; ++n) ne[n] = node_energy(alpha, def.epsilon, c, m, s, h[n], ps.P[n], ps.P0[n]);
    });
    std::vector<double> el(n3), hard(n3), diss(n3);
    Energy3D out;
    const auto& w = g.weights();
    for (int n = 0; n < n3; ++n) {
        el[n] = w[n] * ne[n].el;
        hard[n] = w[n] * ne[n].hard;
        diss[n] = w[n] * ne[n].diss;
        out.nonpositive_det += ne[n].bad_det;
        out.outside_K += ne[n].out_k;
        out.nonsymmetric_log += ne[n].nonsym;
    }
    auto& e = out.energy;
    e.elastic_2d = pairwise_sum(el);
    e.hardening = pairwise_sum(hard);
    e.dissipation = pairwise_sum(diss);
    e.total = e.elastic_2d + e.hardening + e.dissipation;
    return out;
}

std::vector<SymDev3> plastic_on_nodes(const Grid3D& g, const std::vector<SymDev3>& p) {
    const int nn = g.plate().n_nodes(), nq = g.plate().n_x3();
    if (static_cast<int>(p.size()) != nn * nq) throw Error("plastic field does not match the grid sampling");
    const Eigen::MatrixXd l = lagrange_matrix(g);
    std::vector<SymDev3> out(g.n_nodes());
    for (int n = 0; n < nn; ++n)
        for (int k = 0; k < g.nz(); ++k) {
            SymDev3::Coords c = SymDev3::Coords::Zero();
            for (int q = 0; q < nq; ++q) c += l(k, q) * p[n * nq + q].coords();
            out[g.index(n, k)] = SymDev3(c);
        }
    return out;
}

std::vector<Vec3> optimal_transverse(const PlateModel& model, const Grid3D& g, const DisplacementState& st,
                                     const PlasticField& pf, double alpha) {
    check_sizes(model, g, st, pf);
    const auto f = plane_fields(g, st);
    const auto p = plastic_on_nodes(g, pf.p);
    std::vector<Vec3> d(g.n_nodes());
    for (int n = 0; n < g.plate().n_nodes(); ++n)
        for (int k = 0; k < g.nz(); ++k) {
            const int i = g.index(n, k);
            const Mat3 pm = p[i].matrix();
            const Vec3 lam = model.reduced().relax(Mat2(limit_strain(f, n, g.z()[k], alpha) - minor2(pm))).lambdas;
            double d3 = lam[2] + pm(2, 2);
            if (alpha <= 3.0) d3 -= 0.5 * f.g[n].squaredNorm();
            d[i] = Vec3(2.0 * (lam[0] + pm(0, 2)), 2.0 * (lam[1] + pm(1, 2)), d3);
        }
    return d;
}

std::pair<Deformation3D, PlasticStrain3D> recovery_sequence(const PlateModel& model, const Grid3D& g,
                                                            const DisplacementState& st, const PlasticField& pf,
                                                            const std::vector<Vec3>& d, double alpha, double epsilon) {
    check_sizes(model, g, st, pf);
    if (static_cast<int>(d.size()) != g.n_nodes()) throw Error("transverse field does not match the 3D grid");
    if (!(epsilon > 0.0)) throw Error("epsilon must be positive");
    const double t = scale_t(alpha, epsilon), a2 = std::pow(epsilon, alpha - 2.0), a3 = std::pow(epsilon, alpha);
    const auto p = plastic_on_nodes(g, pf.p), p0 = plastic_on_nodes(g, pf.p0);
    double pmax = 0.0;
    for (const auto& s : p) pmax = std::max(pmax, s.norm());
    if (t * pmax >= model.material().rho_K)
        throw KExitError("eps^(alpha-1) max|p| = " + std::to_string(t * pmax) + " reaches rho_K");

    const auto f = plane_fields(g, st);
    const auto& pg = g.plate();
    const double hz = g.z()[1] - g.z()[0];
    Deformation3D def{epsilon, std::vector<Vec3>(g.n_nodes())};
    for (int j = 0; j < pg.ny(); ++j)
        for (int i = 0; i < pg.nx(); ++i) {
            const int n = pg.node(i, j);
            Vec3 acc = Vec3::Zero();  // trapezoid integral of d from -1/2
            for (int k = 0; k < g.nz(); ++k) {
                const int id = g.index(n, k);
                if (k > 0) acc += 0.5 * hz * (d[g.index(n, k - 1)] + d[id]);
                const double x3 = g.z()[k];
                def.y[id] = Vec3(pg.x(i) + t * (st.ux[n] - x3 * f.g[n][0]), pg.y(j) + t * (st.uy[n] - x3 * f.g[n][1]),
                                 epsilon * x3 + a2 * st.v[n]) +
                            a3 * acc;
            }
        }
    PlasticStrain3D ps{epsilon, alpha, std::vector<Mat3>(g.n_nodes()), std::vector<Mat3>(g.n_nodes())};
    for (int i = 0; i < g.n_nodes(); ++i) {
        ps.P[i] = (t * p[i].matrix()).exp();
        ps.P0[i] = (t * p0[i].matrix()).exp();
    }
    return {std::move(def), std::move(ps)};
}

Extracted extract_displacements(const Grid3D& g, const Deformation3D& def, double alpha) {
    const double eps = def.epsilon;
    const double a1 = std::pow(eps, alpha - 1.0), a2 = std::pow(eps, alpha - 2.0);
    const auto& pg = g.plate();
    Extracted out;
    out.u.assign(pg.n_nodes(), Vec2::Zero());
    out.v.assign(pg.n_nodes(), 0.0);
    out.xi.assign(pg.n_nodes(), Vec3::Zero());
    for (int j = 0; j < pg.ny(); ++j)
        for (int i = 0; i < pg.nx(); ++i) {
            const int n = pg.node(i, j);
            Vec2 u = Vec2::Zero();
            double v = 0.0;
            Vec3 xi = Vec3::Zero();
            for (int k = 0; k < g.nz(); ++k) {
                const double w = g.z_weights()[k], x3 = g.z()[k];
                const Vec3& y = def.y[g.index(n, k)];
                const Vec3 r = y - Vec3(pg.x(i), pg.y(j), eps * x3);
                u += w * r.head<2>();
                v += w * y[2];
                xi += w * x3 * r;
            }
            out.u[n] = u / a1;
            out.v[n] = v / a2;
            out.xi[n] = xi / a1;
        }
    return out;
}

EnergyBreakdown limit_energy_on_grid(const PlateModel& model, const Grid3D& g, const DisplacementState& st,
                                     const PlasticField& pf, double alpha) {
    check_sizes(model, g, st, pf);
    const auto f = plane_fields(g, st);
    const auto p = plastic_on_nodes(g, pf.p), p0 = plastic_on_nodes(g, pf.p0);
    const auto& w = g.weights();
    const int n3 = g.n_nodes();
    std::vector<double> el(n3), hard(n3), diss(n3);
    for (int n = 0; n < g.plate().n_nodes(); ++n)
        for (int k = 0; k < g.nz(); ++k) {
            const int i = g.index(n, k);
            const Mat2 e = limit_strain(f, n, g.z()[k], alpha) - minor2(p[i].matrix());
            el[i] = w[i] * model.reduced().q2(e);
            hard[i] = w[i] * hardening_B(model.material(), p[i]);
            diss[i] = w[i] * h_d(model.dissipation(), p[i] - p0[i]);
        }
    EnergyBreakdown e;
    e.elastic_2d = pairwise_sum(el);
    e.hardening = pairwise_sum(hard);
    e.dissipation = pairwise_sum(diss);
    e.total = e.elastic_2d + e.hardening + e.dissipation;
    return e;
}

ConvergenceTable convergence_study(const PlateModel& model, const Grid3D& g, const DisplacementState& st,
                                   const PlasticField& pf, double alpha, const std::vector<double>& eps_list) {
    if (eps_list.empty()) throw ConfigError({"epsilon list is empty"});
    for (std::size_t i = 0; i < eps_list.size(); ++i) {
        if (!(eps_list[i] > 0.0)) throw ConfigError({"epsilon values must be positive"});
        if (i > 0 && !(eps_list[i] < eps_list[i - 1])) throw ConfigError({"epsilon list must be strictly decreasing"});
    }
    ConvergenceTable tab;
    tab.limit = limit_energy_on_grid(model, g, st, pf, alpha);
    tab.limit_2d = model.eval_J(alpha, st, pf);
    const auto d = optimal_transverse(model, g, st, pf, alpha);
    for (double eps : eps_list) {
        const auto [def, ps] = recovery_sequence(model, g, st, pf, d, alpha, eps);
        const auto e = energy_3d(alpha, model.reduced().tensor(), model.material(), model.dissipation(), g, def, ps);
        StudyRow r;
        r.epsilon = eps;
        r.total = e.energy.total;
        r.elastic = e.energy.elastic_2d;
        r.hardening = e.energy.hardening;
        r.dissipation = e.energy.dissipation;
        r.ratio_total = ratio(r.total, tab.limit.total);
        r.ratio_elastic = ratio(r.elastic, tab.limit.elastic_2d);
        r.ratio_hardening = ratio(r.hardening, tab.limit.hardening);
        r.ratio_dissipation = ratio(r.dissipation, tab.limit.dissipation);
        r.ratio_total_2d = ratio(r.total, tab.limit_2d.total);
        r.nonpositive_det = e.nonpositive_det;
        r.outside_K = e.outside_K;
        r.nonsymmetric_log = e.nonsymmetric_log;
        tab.rows.push_back(r);
    }
    const double bound = tab.limit.dissipation * (1.0 + 1e-3);
    const auto& first = tab.rows.front();
    tab.dissipation_constant = std::max(0.0, first.dissipation - bound) / scale_t(alpha, first.epsilon);
    for (const auto& r : tab.rows)
        if (r.dissipation > bound + tab.dissipation_constant * scale_t(alpha, r.epsilon) * (1.0 + 1e-12))
            tab.dissipation_bound_holds = false;
    return tab;
}

// ------------------------------------------------------------ direct 3D solve

namespace {

// Elastic part of the 3D energy in the scaled displacement w = (y - y_fixed) / t
// of the free nodes, with analytic gradient.
class ElasticProblem : public ceres::FirstOrderFunction {
public:
    ElasticProblem(const Grid3D& g, const ElasticTensor& c, double alpha, double eps, const std::vector<Vec3>& base,
                   const std::vector<int>& free, const std::vector<Mat3>& pinv)
        : g_(g), c_(c), eps_(eps), t_(scale_t(alpha, eps)), base_(base), free_(free), pinv_(pinv) {
        const auto ref = identity_plate(g, eps);
        disp0_.resize(base.size());
        for (std::size_t n = 0; n < base.size(); ++n) disp0_[n] = base[n] - ref.y[n];
    }

    int NumParameters() const override { return 3 * static_cast<int>(free_.size()); }

    std::vector<Vec3> deformation(const double* x) const {
        std::vector<Vec3> y = base_;
        for (std::size_t f = 0; f < free_.size(); ++f) y[free_[f]] += t_ * Vec3(x[3 * f], x[3 * f + 1], x[3 * f + 2]);
        return y;
    }

    bool Evaluate(const double* x, double* cost, double* gradient) const override {
        const int n3 = g_.n_nodes();
        std::vector<Vec3> w = disp0_;
        for (std::size_t f = 0; f < free_.size(); ++f) w[free_[f]] += t_ * Vec3(x[3 * f], x[3 * f + 1], x[3 * f + 2]);
        const auto c = components(w);
        Eigen::VectorXd col[3][3];
        for (int j = 0; j < 3; ++j)
            for (int a = 0; a < 3; ++a) col[a][j] = (j == 2 ? 1.0 / eps_ : 1.0) * (g_.diff(j) * c[a]);
        std::vector<double> val(n3);
        std::vector<Mat3> dwdh(n3);
        parallel_for(n3, [&](std::size_t b, std::size_t e) {
            for (std::size_t n = b; n < e; ++n) {
                Mat3 h;
                for (int a = 0; a < 3; ++a)
                    for (int j = 0; j < 3; ++j) h(a, j) = col[a][j][static_cast<Eigen::Index>(n)];
                const Mat3 m = pinv_[n] - Mat3::Identity();
                const Mat3 he = elastic_disp(h, m);
                const Mat3 strain = svk_strain(he);
                const double wn = g_.weights()[n] / (t_ * t_);
                val[n] = wn * c_.quad_form(strain);
                // dW/dF = (Id + He) S P^-T
                dwdh[n] = wn * (Mat3::Identity() + he) * c_.apply(strain) * pinv_[n].transpose();
            }
        });
        *cost = pairwise_sum(val);
        if (gradient) {
            Eigen::VectorXd gy[3];
            for (int a = 0; a < 3; ++a) gy[a] = Eigen::VectorXd::Zero(n3);
            for (int j = 0; j < 3; ++j) {
                const double s = j == 2 ? 1.0 / eps_ : 1.0;
                for (int a = 0; a < 3; ++a) {
                    Eigen::VectorXd r(n3);
                    for (int n = 0; n < n3; ++n) r[n] = dwdh[n](a, j);
                    gy[a] += s * (g_.diff(j).transpose() * r);
                }
            }
            for (std::size_t f = 0; f < free_.size(); ++f)
                for (int a = 0; a < 3; ++a) gradient[3 * f + a] = t_ * gy[a][free_[f]];
        }
        return true;
    }

private:
    const Grid3D& g_;
    const ElasticTensor& c_;
    double eps_, t_;
    std::vector<Vec3> base_, disp0_;
    std::vector<int> free_;
    std::vector<Mat3> pinv_;
};

// argmin_p Q(E - p) + B(p) + H_D(p - p0) over deviatoric p, by proximal gradient.
SymDev3 linearized_plastic_update(const ElasticTensor& c, const MaterialParams& m, const DissipationSpec& s,
                                  const Mat3& strain, const SymDev3& p0, const SymDev3& start) {
    const double step = 1.0 / (c.r_upper() + m.k_hard);
    SymDev3 p = start;
    for (int it = 0; it < 2000; ++it) {
        const SymDev3 grad = m.k_hard * p - SymDev3::project(c.apply(strain - p.matrix()));
        const SymDev3 z = p - step * grad - p0;
        SymDev3 shifted;
        if (s.kind == DissipationSpec::Kind::von_mises) {
            const double nz = z.norm(), thr = step * s.sigma_y;
            shifted = nz > thr ? (1.0 - thr / nz) * z : SymDev3();
        } else {
            shifted = s.prox(z, step);
        }
        const SymDev3 next = shifted + p0;
        const double change = (next - p).norm();
        p = next;
        if (change <= 1e-14 * (1.0 + p.norm())) break;
    }
    return p;
}

}  // namespace

Solve3DReport solve_3d(const PlateModel& model, const Grid3D& g, const std::vector<SymDev3>& p0, double alpha,
                       double epsilon, const Solve3DOptions& opt) {
    if (g.plate().nx() != model.grid().nx() || g.plate().ny() != model.grid().ny() ||
        g.plate().n_x3() != model.grid().n_x3())
        throw Error("3D grid footprint does not match the plate model");
    const auto& c = model.reduced().tensor();
    const auto& mat = model.material();
    const auto& dis = model.dissipation();
    const double t = scale_t(alpha, epsilon);
    const int n3 = g.n_nodes();

    // Start: the datum extended to the whole plate, P = P0.
    Solve3DReport rep;
    rep.deformation = datum_field(g, model.bc(), alpha, epsilon);
    const auto p0n = plastic_on_nodes(g, p0);
    std::vector<SymDev3> p = p0n;
    rep.plastic = PlasticStrain3D{epsilon, alpha, std::vector<Mat3>(n3), std::vector<Mat3>(n3)};
    for (int i = 0; i < n3; ++i) rep.plastic.P[i] = rep.plastic.P0[i] = (t * p0n[i].matrix()).exp();

    std::vector<int> free;
    for (int n = 0; n < g.plate().n_nodes(); ++n)
        if (!g.plate().dirichlet_mask()[n])
            for (int k = 0; k < g.nz(); ++k) free.push_back(g.index(n, k));

    auto energy = [&] { return energy_3d(alpha, c, mat, dis, g, rep.deformation, rep.plastic); };
    double e_prev = energy().energy.total;
    rep.energy_trace.push_back(e_prev);

    for (int it = 0; it < opt.max_outer; ++it) {
        rep.iterations = it + 1;
        std::vector<Mat3> pinv(n3);
        for (int i = 0; i < n3; ++i) pinv[i] = rep.plastic.P[i].inverse();
        auto* problem = new ElasticProblem(g, c, alpha, epsilon, rep.deformation.y, free, pinv);
        std::vector<double> x(problem->NumParameters(), 0.0);
        ceres::GradientProblem gp(problem);
        ceres::GradientProblemSolver::Options so;
        so.line_search_direction_type = ceres::LBFGS;
        so.max_num_iterations = opt.max_lbfgs_iters;
        so.function_tolerance = 1e-14;
        so.gradient_tolerance = 1e-12;
        so.parameter_tolerance = 1e-14;
        so.logging_type = ceres::SILENT;
        ceres::GradientProblemSolver::Summary summary;
        ceres::Solve(so, gp, x.data(), &summary);
        rep.deformation.y = problem->deformation(x.data());

        // Pointwise plastic update from the linearized total strain.
        const auto h = displacement_gradient(g, rep.deformation);
        const std::vector<Mat3> old_p = rep.plastic.P;
        for (int i = 0; i < n3; ++i) {
            p[i] = linearized_plastic_update(c, mat, dis, svk_strain(h[i]) / t, p0n[i], p[i]);
            rep.plastic.P[i] = (t * p[i].matrix()).exp();
        }
        double e_new = energy().energy.total;
        if (!(e_new <= rep.energy_trace.back())) {
            rep.plastic.P = old_p;
            for (int i = 0; i < n3; ++i) p[i] = SymDev3::project(rep.plastic.P[i].log() / t);
            e_new = energy().energy.total;
        }
        rep.energy_trace.push_back(e_new);
        if (e_prev - e_new <= opt.tol * std::max(std::abs(e_new), 1e-300)) {
            rep.converged = true;
            break;
        }
        e_prev = e_new;
    }
    rep.energy = energy();
    return rep;
}

}  // namespace plateplast
