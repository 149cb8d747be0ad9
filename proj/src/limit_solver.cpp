#include "plateplast/limit_solver.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "plateplast/errors.hpp"
#include "plateplast/parallel.hpp"

namespace plateplast {

namespace {

constexpr double kSqrt2 = 1.41421356237309504880;
constexpr double kTiny = 1e-300;
// Slack for "nonincreasing" comparisons of summed energies.
constexpr double kMonotoneSlack = 1e-13;

/// Affine combination of nodal values.
struct Lin {
    std::vector<std::pair<int, double>> t;
    double c = 0.0;

    Lin& add(const Lin& o, double s) {
        for (const auto& [k, a] : o.t) t.emplace_back(k, s * a);
        c += s * o.c;
        return *this;
    }
};

Mandel3 vk_term(const Vec2& g) { return Mandel3(0.5 * g[0] * g[0], 0.5 * g[1] * g[1], g[0] * g[1] / kSqrt2); }

bool is_vk(double alpha) { return alpha == 3.0; }

double rel_change(double before, double after) { return (before - after) / std::max(std::abs(after), kTiny); }

}  // namespace

PlateModel::PlateModel(PlateGrid grid, BoundaryData bc, const ElasticTensor& c, MaterialParams m, DissipationSpec s)
    : grid_(std::move(grid)), bc_(bc), rf_(c), m_(m), s_(std::move(s)) {
    m_.validate();
    build_membrane();
    build_bending();
}

int PlateModel::cell_corner(int cell, int a) const {
    const int ci = cell % (grid_.nx() - 1), cj = cell / (grid_.nx() - 1);
    return grid_.node(ci + (a & 1), cj + (a >> 1));
}

void PlateModel::build_membrane() {
    const double hx = grid_.hx(), hy = grid_.hy();
    const double off = 0.25 / std::sqrt(3.0);
    for (int a = 0; a < 4; ++a) {
        const double cx = 0.5 * (a & 1) + 0.25, cy = 0.5 * (a >> 1) + 0.25;
        for (int g = 0; g < 4; ++g) {
            const double xi = cx + ((g & 1) ? off : -off), eta = cy + ((g >> 1) ? off : -off);
            Template t{};
            t.corner = a;
            t.w = hx * hy / 16.0;
            t.n[0] = (1 - xi) * (1 - eta);
            t.n[1] = xi * (1 - eta);
            t.n[2] = (1 - xi) * eta;
            t.n[3] = xi * eta;
            t.dx[0] = -(1 - eta) / hx;
            t.dx[1] = (1 - eta) / hx;
            t.dx[2] = -eta / hx;
            t.dx[3] = eta / hx;
            t.dy[0] = -(1 - xi) / hy;
            t.dy[1] = -xi / hy;
            t.dy[2] = (1 - xi) / hy;
            t.dy[3] = xi / hy;
            tmpl_.push_back(t);
        }
    }
    const int nc = grid_.n_cells(), nn = grid_.n_nodes();
    gp_owner_.resize(static_cast<std::size_t>(nc) * 16);
    node_gps_.assign(nn, {});
    for (int c = 0; c < nc; ++c)
        for (int t = 0; t < 16; ++t) {
            const int owner = cell_corner(c, tmpl_[t].corner);
            gp_owner_[c * 16 + t] = owner;
            node_gps_[owner].push_back(c * 16 + t);
        }

    const Eigen::Matrix3d& a2 = rf_.q2_matrix();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(nc) * 16 * 64);
    Eigen::Matrix<double, 3, 8> b;
    for (int g = 0; g < n_gauss(); ++g) {
        local_b(g, b);
        const Eigen::Matrix<double, 8, 8> ke = gauss_weight(g) * b.transpose() * a2 * b;
        const int c = g / 16;
        int dof[8];
        for (int a = 0; a < 4; ++a) {
            dof[a] = cell_corner(c, a);
            dof[4 + a] = nn + cell_corner(c, a);
        }
        for (int r = 0; r < 8; ++r)
            for (int s = 0; s < 8; ++s) trip.emplace_back(dof[r], dof[s], ke(r, s));
    }
    Eigen::SparseMatrix<double> k(2 * nn, 2 * nn);
    k.setFromTriplets(trip.begin(), trip.end());
    std::vector<char> fixed(2 * nn);
    for (int n = 0; n < nn; ++n) fixed[n] = fixed[nn + n] = grid_.dirichlet_mask()[n];
    mem_ = std::make_shared<LinearSystem>();
    setup_system(*mem_, k, fixed);
}

void PlateModel::local_b(int gp, Eigen::Matrix<double, 3, 8>& b) const {
    const Template& t = tmpl_[gp % 16];
    b.setZero();
    for (int a = 0; a < 4; ++a) {
        b(0, a) = t.dx[a];
        b(1, 4 + a) = t.dy[a];
        b(2, a) = t.dy[a] / kSqrt2;
        b(2, 4 + a) = t.dx[a] / kSqrt2;
    }
}

void PlateModel::build_bending() {
    const int nx = grid_.nx(), ny = grid_.ny(), nn = grid_.n_nodes();
    const double hx = grid_.hx(), hy = grid_.hy();

    // Nodal value with ghost-node rules: clamped edges reflect with the
    // prescribed normal slope, free edges extrapolate quadratically.
    std::function<Lin(int, int)> value = [&](int i, int j) -> Lin {
        Lin r;
        if (i < 0) {
            if (grid_.clamped(Edge::left)) {
                r.add(value(1, j), 1.0);
                r.c -= 2 * hx * bc_.grad_v0(grid_.x(0), grid_.y(j))[0];
            } else {
                r.add(value(0, j), 3.0).add(value(1, j), -3.0).add(value(2, j), 1.0);
            }
        } else if (i >= nx) {
            if (grid_.clamped(Edge::right)) {
                r.add(value(nx - 2, j), 1.0);
                r.c += 2 * hx * bc_.grad_v0(grid_.x(nx - 1), grid_.y(j))[0];
            } else {
                r.add(value(nx - 1, j), 3.0).add(value(nx - 2, j), -3.0).add(value(nx - 3, j), 1.0);
            }
        } else if (j < 0) {
            if (grid_.clamped(Edge::bottom)) {
                r.add(value(i, 1), 1.0);
                r.c -= 2 * hy * bc_.grad_v0(grid_.x(i), grid_.y(0))[1];
            } else {
                r.add(value(i, 0), 3.0).add(value(i, 1), -3.0).add(value(i, 2), 1.0);
            }
        } else if (j >= ny) {
            if (grid_.clamped(Edge::top)) {
                r.add(value(i, ny - 2), 1.0);
                r.c += 2 * hy * bc_.grad_v0(grid_.x(i), grid_.y(ny - 1))[1];
            } else {
                r.add(value(i, ny - 1), 3.0).add(value(i, ny - 2), -3.0).add(value(i, ny - 3), 1.0);
            }
        } else {
            r.t.emplace_back(grid_.node(i, j), 1.0);
        }
        return r;
    };

    std::vector<Eigen::Triplet<double>> gt, ht;
    grad_off_ = Eigen::VectorXd::Zero(2 * nn);
    hess_off_ = Eigen::VectorXd::Zero(3 * nn);
    auto emit = [](std::vector<Eigen::Triplet<double>>& trip, Eigen::VectorXd& off, int row, const Lin& l) {
        for (const auto& [k, a] : l.t) trip.emplace_back(row, k, a);
        off[row] += l.c;
    };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const int n = grid_.node(i, j);
            Lin gx, gy, hxx, hyy, hxy;
            gx.add(value(i + 1, j), 0.5 / hx).add(value(i - 1, j), -0.5 / hx);
            gy.add(value(i, j + 1), 0.5 / hy).add(value(i, j - 1), -0.5 / hy);
            hxx.add(value(i + 1, j), 1 / (hx * hx)).add(value(i, j), -2 / (hx * hx)).add(value(i - 1, j), 1 / (hx * hx));
            hyy.add(value(i, j + 1), 1 / (hy * hy)).add(value(i, j), -2 / (hy * hy)).add(value(i, j - 1), 1 / (hy * hy));
            const double s = kSqrt2 / (4 * hx * hy);  // Mandel weight folded in
            hxy.add(value(i + 1, j + 1), s).add(value(i + 1, j - 1), -s).add(value(i - 1, j + 1), -s).add(
                value(i - 1, j - 1), s);
            emit(gt, grad_off_, 2 * n, gx);
            emit(gt, grad_off_, 2 * n + 1, gy);
            emit(ht, hess_off_, 3 * n, hxx);
            emit(ht, hess_off_, 3 * n + 1, hyy);
            emit(ht, hess_off_, 3 * n + 2, hxy);
        }
    grad_op_.resize(2 * nn, nn);
    grad_op_.setFromTriplets(gt.begin(), gt.end());
    hess_op_.resize(3 * nn, nn);
    hess_op_.setFromTriplets(ht.begin(), ht.end());

    // K = sum_n (A_n / 12) H_n^T A2 H_n.
    std::vector<Eigen::Triplet<double>> wt;
    const Eigen::Matrix3d& a2 = rf_.q2_matrix();
    for (int n = 0; n < nn; ++n)
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) wt.emplace_back(3 * n + r, 3 * n + c, grid_.node_area()[n] / 12.0 * a2(r, c));
    Eigen::SparseMatrix<double> w(3 * nn, 3 * nn);
    w.setFromTriplets(wt.begin(), wt.end());
    const Eigen::SparseMatrix<double> h = hess_op_;
    Eigen::SparseMatrix<double> k = h.transpose() * w * h;
    bend_ = std::make_shared<LinearSystem>();
    setup_system(*bend_, k, grid_.dirichlet_mask());
}

void PlateModel::setup_system(LinearSystem& sys, const Eigen::SparseMatrix<double>& k, const std::vector<char>& fixed) {
    const int n = static_cast<int>(fixed.size());
    std::vector<int> pos(n);
    for (int i = 0; i < n; ++i) {
        if (fixed[i]) {
            pos[i] = static_cast<int>(sys.fixed.size());
            sys.fixed.push_back(i);
        } else {
            pos[i] = static_cast<int>(sys.free.size());
            sys.free.push_back(i);
        }
    }
    std::vector<Eigen::Triplet<double>> ff, fd;
    for (int c = 0; c < k.outerSize(); ++c)
        for (Eigen::SparseMatrix<double>::InnerIterator it(k, c); it; ++it) {
            const int r = static_cast<int>(it.row()), col = static_cast<int>(it.col());
            if (fixed[r]) continue;
            (fixed[col] ? fd : ff).emplace_back(pos[r], pos[col], it.value());
        }
    sys.kff.resize(static_cast<int>(sys.free.size()), static_cast<int>(sys.free.size()));
    sys.kff.setFromTriplets(ff.begin(), ff.end());
    sys.kfd.resize(static_cast<int>(sys.free.size()), static_cast<int>(sys.fixed.size()));
    sys.kfd.setFromTriplets(fd.begin(), fd.end());
    sys.cg.setMaxIterations(20000);
    sys.cg.compute(sys.kff);
}

void PlateModel::solve_system(const LinearSystem& sys, const Eigen::VectorXd& rhs_all, Eigen::VectorXd& x_all,
                              SolveReport* rep) const {
    const int nf = static_cast<int>(sys.free.size()), nd = static_cast<int>(sys.fixed.size());
    Eigen::VectorXd b(nf), xd(nd), x0(nf);
    for (int i = 0; i < nf; ++i) {
        b[i] = rhs_all[sys.free[i]];
        x0[i] = x_all[sys.free[i]];
    }
    for (int i = 0; i < nd; ++i) xd[i] = x_all[sys.fixed[i]];
    if (nd > 0) b -= sys.kfd * xd;
    sys.cg.setTolerance(cg_tol_);
    const Eigen::VectorXd x = sys.cg.solveWithGuess(b, x0);
    for (int i = 0; i < nf; ++i) x_all[sys.free[i]] = x[i];
    if (rep) {
        rep->cg_iterations += static_cast<int>(sys.cg.iterations());
        rep->max_cg_residual = std::max(rep->max_cg_residual, sys.cg.error());
    }
}

DisplacementState PlateModel::boundary_extension() const {
    const int nn = grid_.n_nodes();
    DisplacementState st = DisplacementState::zeros(nn);
    for (int j = 0; j < grid_.ny(); ++j)
        for (int i = 0; i < grid_.nx(); ++i) {
            const int n = grid_.node(i, j);
            const double x = grid_.x(i), y = grid_.y(j);
            st.ux[n] = bc_.u0x(x, y);
            st.uy[n] = bc_.u0y(x, y);
            st.v[n] = bc_.v0(x, y);
        }
    return st;
}

void PlateModel::check_admissible(const DisplacementState& st) const {
    const int nn = grid_.n_nodes();
    if (st.ux.size() != nn || st.uy.size() != nn || st.v.size() != nn)
        throw AdmissibilityError("displacement state does not match the grid");
    for (int j = 0; j < grid_.ny(); ++j)
        for (int i = 0; i < grid_.nx(); ++i) {
            const int n = grid_.node(i, j);
            if (!grid_.dirichlet_mask()[n]) continue;
            const double x = grid_.x(i), y = grid_.y(j);
            const double ref[3] = {bc_.u0x(x, y), bc_.u0y(x, y), bc_.v0(x, y)};
            const double val[3] = {st.ux[n], st.uy[n], st.v[n]};
            for (int k = 0; k < 3; ++k)
                if (std::abs(val[k] - ref[k]) > 1e-12 * (1.0 + std::abs(ref[k])))
                    throw AdmissibilityError("boundary condition violated at node (" + std::to_string(i) + ", " +
                                             std::to_string(j) + ")");
        }
}

void PlateModel::impose_dirichlet(DisplacementState& st) const {
    for (int j = 0; j < grid_.ny(); ++j)
        for (int i = 0; i < grid_.nx(); ++i) {
            const int n = grid_.node(i, j);
            if (!grid_.dirichlet_mask()[n]) continue;
            const double x = grid_.x(i), y = grid_.y(j);
            st.ux[n] = bc_.u0x(x, y);
            st.uy[n] = bc_.u0y(x, y);
            st.v[n] = bc_.v0(x, y);
        }
}

PlasticField PlateModel::make_plastic_field() const { return PlasticField(grid_.n_nodes(), grid_.n_x3()); }

std::vector<Vec2> PlateModel::slope(const Eigen::VectorXd& v) const {
    const Eigen::VectorXd g = grad_op_ * v + grad_off_;
    std::vector<Vec2> out(grid_.n_nodes());
    for (int n = 0; n < grid_.n_nodes(); ++n) out[n] = Vec2(g[2 * n], g[2 * n + 1]);
    return out;
}

std::vector<Mandel3> PlateModel::curvature(const Eigen::VectorXd& v) const {
    const Eigen::VectorXd h = hess_op_ * v + hess_off_;
    std::vector<Mandel3> out(grid_.n_nodes());
    for (int n = 0; n < grid_.n_nodes(); ++n) out[n] = Mandel3(h[3 * n], h[3 * n + 1], h[3 * n + 2]);
    return out;
}

Vec2 PlateModel::gauss_slope(const std::vector<Vec2>& g, int gp) const {
    const Template& t = tmpl_[gp % 16];
    Vec2 r = Vec2::Zero();
    for (int a = 0; a < 4; ++a) r += t.n[a] * g[cell_corner(gp / 16, a)];
    return r;
}

std::vector<Mandel3> PlateModel::membrane_strain(const DisplacementState& st, bool von_karman) const {
    std::vector<Mandel3> out(n_gauss());
    std::vector<Vec2> g;
    if (von_karman) g = slope(st.v);
    parallel_for(out.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t gi = b; gi < e; ++gi) {
            const int gp = static_cast<int>(gi);
            const Template& t = tmpl_[gp % 16];
            double e11 = 0, e22 = 0, e12 = 0;
            for (int a = 0; a < 4; ++a) {
                const int n = cell_corner(gp / 16, a);
                e11 += t.dx[a] * st.ux[n];
                e22 += t.dy[a] * st.uy[n];
                e12 += t.dy[a] * st.ux[n] + t.dx[a] * st.uy[n];
            }
            Mandel3 m(e11, e22, e12 / kSqrt2);
            if (von_karman) m += vk_term(gauss_slope(g, gp));
            out[gi] = m;
        }
    });
    return out;
}

std::vector<Mandel3> PlateModel::node_membrane_strain(const DisplacementState& st, bool von_karman) const {
    const std::vector<Mandel3> m = membrane_strain(st, von_karman);
    std::vector<Mandel3> out(grid_.n_nodes(), Mandel3::Zero());
    for (int n = 0; n < grid_.n_nodes(); ++n) {
        for (int gp : node_gps_[n]) out[n] += gauss_weight(gp) * m[gp];
        out[n] /= grid_.node_area()[n];
    }
    return out;
}

EnergyBreakdown PlateModel::eval_J(double alpha, const DisplacementState& st, const PlasticField& pf) const {
    check_admissible(st);
    const int nn = grid_.n_nodes(), nq = grid_.n_x3();
    if (pf.n_x3 != nq || static_cast<int>(pf.p.size()) != nn * nq)
        throw Error("plastic field does not match the grid sampling");
    const auto& quad = grid_.x3_quad();
    const auto& mm = minor_map();
    const std::vector<Mandel3> m = membrane_strain(st, is_vk(alpha));
    const std::vector<Mandel3> h = curvature(st.v);
    std::vector<double> el(nn), hard(nn), diss(nn);
    parallel_for(nn, [&](std::size_t b, std::size_t e) {
        for (std::size_t ni = b; ni < e; ++ni) {
            const int n = static_cast<int>(ni);
            double se = 0, sh = 0, sd = 0;
            for (int q = 0; q < nq; ++q) {
                const SymDev3& p = pf.at(n, q);
                const Mandel3 pm = mm * p.coords();
                double acc = 0;
                for (int gp : node_gps_[n]) acc += gauss_weight(gp) * rf_.q2(Mandel3(m[gp] - quad.x[q] * h[n] - pm));
                se += quad.w[q] * acc;
                sh += quad.w[q] * hardening_B(m_, p);
                sd += quad.w[q] * h_d(s_, p - pf.at0(n, q));
            }
            el[n] = se;
            hard[n] = grid_.node_area()[n] * sh;
            diss[n] = grid_.node_area()[n] * sd;
        }
    });
    EnergyBreakdown r;
    r.elastic_2d = pairwise_sum(el);
    r.hardening = pairwise_sum(hard);
    r.dissipation = pairwise_sum(diss);
    r.total = r.elastic_2d + r.hardening + r.dissipation;
    return r;
}

DisplacementState PlateModel::grad_J(double alpha, const DisplacementState& st, const PlasticField& pf) const {
    const int nn = grid_.n_nodes(), nq = grid_.n_x3();
    const bool vk = is_vk(alpha);
    const auto& quad = grid_.x3_quad();
    const auto& mm = minor_map();
    const Eigen::Matrix3d& a2 = rf_.q2_matrix();
    const std::vector<Mandel3> m = membrane_strain(st, vk);
    const std::vector<Mandel3> h = curvature(st.v);
    std::vector<Mandel3> pbar(nn, Mandel3::Zero()), phat(nn, Mandel3::Zero());
    for (int n = 0; n < nn; ++n)
        for (int q = 0; q < nq; ++q) {
            const Mandel3 pm = mm * pf.at(n, q).coords();
            pbar[n] += quad.w[q] * pm;
            phat[n] += 12.0 * quad.w[q] * quad.x[q] * pm;
        }
    DisplacementState g = DisplacementState::zeros(nn);
    std::vector<Vec2> slopes, gslope(nn, Vec2::Zero());
    if (vk) slopes = slope(st.v);
    for (int gp = 0; gp < n_gauss(); ++gp) {
        const Template& t = tmpl_[gp % 16];
        const Mandel3 sig = gauss_weight(gp) * a2 * (m[gp] - pbar[gauss_owner(gp)]);
        for (int a = 0; a < 4; ++a) {
            const int n = cell_corner(gp / 16, a);
            g.ux[n] += sig[0] * t.dx[a] + sig[2] * t.dy[a] / kSqrt2;
            g.uy[n] += sig[1] * t.dy[a] + sig[2] * t.dx[a] / kSqrt2;
        }
        if (vk) {
            const Vec2 s = gauss_slope(slopes, gp);
            const Vec2 dg(sig[0] * s[0] + sig[2] * s[1] / kSqrt2, sig[1] * s[1] + sig[2] * s[0] / kSqrt2);
            for (int a = 0; a < 4; ++a) gslope[cell_corner(gp / 16, a)] += t.n[a] * dg;
        }
    }
    Eigen::VectorXd tau(3 * nn);
    for (int n = 0; n < nn; ++n)
        tau.segment<3>(3 * n) = grid_.node_area()[n] / 12.0 * a2 * (h[n] + phat[n]);
    g.v = hess_op_.transpose() * tau;
    if (vk) {
        Eigen::VectorXd gs(2 * nn);
        for (int n = 0; n < nn; ++n) gs.segment<2>(2 * n) = gslope[n];
        g.v += grad_op_.transpose() * gs;
    }
    return g;
}

void PlateModel::solve_membrane(const std::vector<Mandel3>& target_gp, DisplacementState& st, SolveReport* rep) const {
    const int nn = grid_.n_nodes();
    const Eigen::Matrix3d& a2 = rf_.q2_matrix();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(2 * nn);
    Eigen::Matrix<double, 3, 8> b;
    for (int gp = 0; gp < n_gauss(); ++gp) {
        local_b(gp, b);
        const Eigen::Matrix<double, 8, 1> f = gauss_weight(gp) * b.transpose() * (a2 * target_gp[gp]);
        for (int a = 0; a < 4; ++a) {
            const int n = cell_corner(gp / 16, a);
            rhs[n] += f[a];
            rhs[nn + n] += f[4 + a];
        }
    }
    Eigen::VectorXd x(2 * nn);
    x << st.ux, st.uy;
    solve_system(*mem_, rhs, x, rep);
    st.ux = x.head(nn);
    st.uy = x.tail(nn);
}

void PlateModel::solve_bending(const std::vector<Mandel3>& target_node, DisplacementState& st, SolveReport* rep) const {
    const int nn = grid_.n_nodes();
    const Eigen::Matrix3d& a2 = rf_.q2_matrix();
    Eigen::VectorXd r(3 * nn);
    for (int n = 0; n < nn; ++n)
        r.segment<3>(3 * n) =
            grid_.node_area()[n] / 12.0 * a2 * (target_node[n] - hess_off_.segment<3>(3 * n));
    const Eigen::VectorXd rhs = hess_op_.transpose() * r;
    solve_system(*bend_, rhs, st.v, rep);
}

Eigen::VectorXd PlateModel::bending_solve(const Eigen::VectorXd& rhs_all, SolveReport* rep) const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(grid_.n_nodes());
    // Fixed entries stay zero, so the solve acts on free dofs only.
    solve_system(*bend_, rhs_all, x, rep);
    return x;
}

// ------------------------------------------------------------ drivers

SweepResult alternating_sweep(const PlateModel& model, double alpha, DisplacementState& st, PlasticField& pf,
                              bool solve_v, bool freeze_plastic, SolveReport* rep) {
    const PlateGrid& grid = model.grid();
    const int nn = grid.n_nodes(), nq = grid.n_x3();
    const auto& quad = grid.x3_quad();
    const auto& mm = minor_map();
    const bool vk = is_vk(alpha);

    std::vector<Mandel3> pbar(nn, Mandel3::Zero()), phat(nn, Mandel3::Zero());
    for (int n = 0; n < nn; ++n)
        for (int q = 0; q < nq; ++q) {
            const Mandel3 pm = mm * pf.at(n, q).coords();
            pbar[n] += quad.w[q] * pm;
            phat[n] += 12.0 * quad.w[q] * quad.x[q] * pm;
        }
    std::vector<Mandel3> target(model.n_gauss());
    for (int gp = 0; gp < model.n_gauss(); ++gp) target[gp] = pbar[model.gauss_owner(gp)];
    if (vk) {
        // The von Karman term alone is the membrane strain of (0, v).
        DisplacementState zero_u{Eigen::VectorXd::Zero(nn), Eigen::VectorXd::Zero(nn), st.v};
        const std::vector<Mandel3> vkt = model.membrane_strain(zero_u, true);
        for (int gp = 0; gp < model.n_gauss(); ++gp) target[gp] -= vkt[gp];
    }
    model.solve_membrane(target, st, rep);
    if (solve_v) {
        std::vector<Mandel3> tb(nn);
        for (int n = 0; n < nn; ++n) tb[n] = -phat[n];
        model.solve_bending(tb, st, rep);
    }
    SweepResult r;
    r.after_displacement = model.eval_J(alpha, st, pf).total;

    if (!freeze_plastic) {
        const std::vector<Mandel3> ebar = model.node_membrane_strain(st, vk);
        const std::vector<Mandel3> h = model.curvature(st.v);
        std::vector<double> res(nn, 0.0);
        parallel_for(nn, [&](std::size_t b, std::size_t e) {
            for (std::size_t ni = b; ni < e; ++ni) {
                const int n = static_cast<int>(ni);
                for (int q = 0; q < nq; ++q) {
                    const Mat2 eq = from_mandel(Mandel3(ebar[n] - quad.x[q] * h[n]));
                    const ProxResult pr =
                        plastic_prox(model.reduced(), model.material(), model.dissipation(), eq, pf.at0(n, q));
                    pf.at(n, q) = pr.p;
                    res[n] = std::max(res[n], pr.residual);
                }
            }
        });
        if (rep) rep->max_prox_residual = std::max(rep->max_prox_residual, *std::max_element(res.begin(), res.end()));
    }
    r.after_plastic = freeze_plastic ? r.after_displacement : model.eval_J(alpha, st, pf).total;
    return r;
}

namespace {

void prepare_start(const PlateModel& model, DisplacementState& st, PlasticField& pf) {
    const int nn = model.grid().n_nodes();
    if (st.ux.size() != nn || st.uy.size() != nn || st.v.size() != nn) st = model.boundary_extension();
    model.check_admissible(st);
    if (pf.n_x3 != model.grid().n_x3() || static_cast<int>(pf.p.size()) != nn * model.grid().n_x3()) {
        PlasticField fresh = model.make_plastic_field();
        if (pf.p0.size() == fresh.p0.size()) fresh.p0 = pf.p0;
        pf = fresh;
        pf.p = pf.p0;
    }
}

/// Runs sweeps until the relative decrease drops below tol; records the trace.
void run_alternating(const PlateModel& model, double alpha, DisplacementState& st, PlasticField& pf, bool solve_v,
                     const SolverOptions& opt, SolveReport& rep, double tol, int max_sweeps) {
    double prev = model.eval_J(alpha, st, pf).total;
    if (rep.energy_trace.empty()) rep.energy_trace.push_back(prev);
    bool done = false;
    for (int k = 0; k < max_sweeps; ++k) {
        const SweepResult s = alternating_sweep(model, alpha, st, pf, solve_v, opt.freeze_plastic, &rep);
        ++rep.iterations;
        rep.energy_trace.push_back(s.after_displacement);
        rep.energy_trace.push_back(s.after_plastic);
        if (s.after_displacement > prev + kMonotoneSlack * std::abs(prev)) ++rep.monotone_violations;
        if (s.after_plastic > s.after_displacement + kMonotoneSlack * std::abs(s.after_displacement))
            ++rep.monotone_violations;
        const double dec = rel_change(prev, s.after_plastic);
        prev = s.after_plastic;
        if (dec < tol) {
            done = true;
            break;
        }
    }
    rep.converged = done;
}

}  // namespace

SolveReport minimize_linear(const PlateModel& model, double alpha, DisplacementState& st, PlasticField& pf,
                            const SolverOptions& opt) {
    if (!(alpha > 3.0)) throw HypothesisError("minimize_linear requires alpha > 3");
    prepare_start(model, st, pf);
    model.set_cg_tolerance(opt.cg_tol);
    SolveReport rep;
    run_alternating(model, alpha, st, pf, true, opt, rep, opt.tol, opt.max_outer);
    rep.flagged = !rep.converged;

    // Certificate: one extra sweep after stopping.
    const double before = model.eval_J(alpha, st, pf).total;
    const SweepResult s = alternating_sweep(model, alpha, st, pf, true, opt.freeze_plastic, &rep);
    rep.terminal_improvement = rel_change(before, s.after_plastic);
    rep.energy = model.eval_J(alpha, st, pf);
    return rep;
}

namespace {

struct VkRun {
    DisplacementState st;
    PlasticField pf;
    SolveReport rep;
};

VkRun vk_single(const PlateModel& model, DisplacementState st, PlasticField pf, const SolverOptions& opt) {
    const int nn = model.grid().n_nodes();
    const auto& mask = model.grid().dirichlet_mask();
    VkRun out;
    SolveReport& rep = out.rep;
    double cap = 1.0;
    int consecutive_failures = 0;
    const double inner_tol = std::min(opt.tol, 1e-12);
    for (int it = 0; it < opt.max_vk_iters; ++it) {
        SolveReport inner;
        run_alternating(model, 3.0, st, pf, false, opt, inner, inner_tol, opt.max_outer);
        rep.cg_iterations += inner.cg_iterations;
        rep.max_cg_residual = std::max(rep.max_cg_residual, inner.max_cg_residual);
        rep.max_prox_residual = std::max(rep.max_prox_residual, inner.max_prox_residual);
        rep.monotone_violations += inner.monotone_violations;
        rep.iterations += inner.iterations;

        Eigen::VectorXd g = model.grad_J(3.0, st, pf).v;
        for (int n = 0; n < nn; ++n)
            if (mask[n]) g[n] = 0.0;
        const double e0 = model.eval_J(3.0, st, pf).total;
        rep.energy_trace.push_back(e0);
        rep.grad_norm = g.norm();
        if (rep.grad_norm <= opt.grad_tol) {
            rep.converged = true;
            break;
        }
        const Eigen::VectorXd d = -model.bending_solve(g, &rep);
        const double slope = g.dot(d);
        double t = cap;
        bool accepted = false;
        DisplacementState trial = st;
        for (int ls = 0; ls < 40; ++ls) {
            trial.v = st.v + t * d;
            const double e = model.eval_J(3.0, trial, pf).total;
            if (e <= e0 + 1e-4 * t * slope) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (accepted) {
            st.v = trial.v;
            consecutive_failures = 0;
            if (t == cap) cap = std::min(1.0, 2.0 * cap);
        } else {
            ++rep.line_search_failures;
            cap *= 0.5;
            if (++consecutive_failures >= 5) break;
        }
    }
    rep.flagged = !rep.converged;
    rep.energy = model.eval_J(3.0, st, pf);
    out.st = std::move(st);
    out.pf = std::move(pf);
    return out;
}

}  // namespace

SolveReport minimize_vk(const PlateModel& model, DisplacementState& st, PlasticField& pf, const SolverOptions& opt) {
    prepare_start(model, st, pf);
    model.set_cg_tolerance(opt.cg_tol);
    const PlateGrid& grid = model.grid();
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    const double scale = opt.restart_amplitude * (1.0 + st.v.cwiseAbs().maxCoeff());

    std::vector<double> energies;
    VkRun best;
    bool have = false;
    const int runs = std::max(1, opt.n_restarts);
    for (int r = 0; r < runs; ++r) {
        DisplacementState s0 = st;
        if (r > 0) {
            // Smooth random perturbation built from the lowest sine modes.
            double coef[2][2];
            for (auto& row : coef)
                for (double& c : row) c = scale * unif(rng);
            for (int j = 0; j < grid.ny(); ++j)
                for (int i = 0; i < grid.nx(); ++i) {
                    const int n = grid.node(i, j);
                    if (grid.dirichlet_mask()[n]) continue;
                    const double sx = grid.x(i) / grid.lx(), sy = grid.y(j) / grid.ly();
                    double dv = 0;
                    for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 2; ++b)
                            dv += coef[a][b] * std::sin((a + 1) * M_PI * sx) * std::sin((b + 1) * M_PI * sy);
                    s0.v[n] += dv;
                }
        }
        VkRun run = vk_single(model, s0, pf, opt);
        energies.push_back(run.rep.energy.total);
        if (!have || run.rep.energy.total < best.rep.energy.total ||
            (run.rep.energy.total == best.rep.energy.total && run.rep.converged && !best.rep.converged)) {
            best = std::move(run);
            have = true;
        }
    }
    best.rep.restart_energies = energies;
    st = best.st;
    pf = best.pf;
    return best.rep;
}

}  // namespace plateplast
