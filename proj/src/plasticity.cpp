#include "plateplast/plasticity.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "plateplast/errors.hpp"

namespace plateplast {

namespace {

constexpr double kDetTol = 1e-9;

using Vec5 = SymDev3::Coords;
using Mat5 = Eigen::Matrix<double, 5, 5>;

}  // namespace

void MaterialParams::validate() const {
    if (!(k_hard > 0.0)) throw InvalidMaterialError("k_hard must be positive");
    if (!(sigma_y > 0.0)) throw InvalidMaterialError("sigma_y must be positive");
    if (!(rho_K > 0.0 && rho_K < 1.0)) throw InvalidMaterialError("rho_K must lie in (0, 1)");
}

DissipationSpec DissipationSpec::von_mises(double sigma_y) {
    if (!(sigma_y > 0.0)) throw InvalidMaterialError("sigma_y must be positive");
    DissipationSpec s;
    s.kind = Kind::von_mises;
    s.sigma_y = sigma_y;
    s.r_K = sigma_y;
    s.R_K = sigma_y;
    s.even = true;
    return s;
}

double hardening_B(const MaterialParams& m, const Mat3& f) { return 0.5 * m.k_hard * f.squaredNorm(); }

double w_hard(const MaterialParams& m, const Mat3& f) {
    if (!is_unimodular(f, kDetTol)) return kInfinity;
    const Mat3 d = f - Mat3::Identity();
    if (d.norm() > m.rho_K) return kInfinity;
    return hardening_B(m, d);
}

double h_d(const DissipationSpec& s, const SymDev3& xi) {
    if (s.kind == DissipationSpec::Kind::von_mises) return s.sigma_y * xi.norm();
    return s.value(xi);
}

double h_full(const DissipationSpec& s, const Mat3& f, double tol) {
    const double scale = std::max(1.0, f.norm());
    if ((f - f.transpose()).norm() > tol * scale || std::abs(f.trace()) > tol * scale) return kInfinity;
    return h_d(s, SymDev3::project(f));
}

namespace {

// H_D(log F) for F near Id, assuming det F = 1 already checked.
double exp_path_cost(const DissipationSpec& s, const Mat3& f) {
    if ((f - Mat3::Identity()).norm() >= 1.0)
        throw OutOfNeighborhoodError("principal logarithm requires |F - Id| < 1");
    const Mat3 l = f.log();
    const double ln = l.norm();
    const double skew = 0.5 * (l - l.transpose()).norm();
    if (skew > 1e-13 + 1e-9 * ln || std::abs(l.trace()) > kDetTol) return kInfinity;
    return h_d(s, SymDev3::project(l));
}

double safe_cost(const DissipationSpec& s, const Mat3& f) {
    try {
        return exp_path_cost(s, f);
    } catch (const OutOfNeighborhoodError&) {
        return kInfinity;
    }
}

// Piecewise-exponential path Id -> exp(S_1) -> exp(S_2)exp(S_1) -> ... -> F,
// with free steps S_1..S_{n-1} in M_D and a final step closing the path.
struct Path {
    std::vector<SymDev3> steps;
    double cost = kInfinity;
};

Mat3 product(const std::vector<SymDev3>& steps) {
    Mat3 g = Mat3::Identity();
    for (const auto& st : steps) g = st.matrix().exp() * g;
    return g;
}

double path_cost(const DissipationSpec& s, const Mat3& f, const std::vector<SymDev3>& steps) {
    double c = 0.0;
    for (const auto& st : steps) c += h_d(s, st);
    const Mat3 closing = f * product(steps).inverse();
    return c + safe_cost(s, closing);
}

// Skew part of log of the closing step; zero on feasible paths.
Vec3 closing_skew(const Mat3& f, const std::vector<SymDev3>& steps) {
    const Mat3 closing = f * product(steps).inverse();
    if ((closing - Mat3::Identity()).norm() >= 1.0) return Vec3::Constant(kInfinity);
    const Mat3 l = closing.log();
    return Vec3(l(0, 1) - l(1, 0), l(0, 2) - l(2, 0), l(1, 2) - l(2, 1)) * 0.5;
}

// Gauss-Newton (minimum-norm) correction of the last free step so that the
// closing step has a symmetric logarithm.
bool restore_feasibility(const Mat3& f, std::vector<SymDev3>& steps) {
    if (steps.empty()) return false;
    auto& last = steps.back();
    for (int it = 0; it < 25; ++it) {
        const Vec3 c = closing_skew(f, steps);
        if (!c.allFinite()) return false;
        if (c.norm() < 1e-15) return true;
        Eigen::Matrix<double, 3, 5> jac;
        const double h = 1e-7;
        for (int i = 0; i < 5; ++i) {
            const SymDev3 keep = last;
            last.coords()[i] += h;
            const Vec3 cp = closing_skew(f, steps);
            last.coords()[i] -= 2.0 * h;
            const Vec3 cm = closing_skew(f, steps);
            last = keep;
            if (!cp.allFinite() || !cm.allFinite()) return false;
            jac.col(i) = (cp - cm) / (2.0 * h);
        }
        const Eigen::Matrix3d jjt = jac * jac.transpose();
        Eigen::LDLT<Eigen::Matrix3d> ldlt(jjt);
        if (ldlt.info() != Eigen::Success || std::abs(jjt.determinant()) < 1e-30) return false;
        const Vec5 delta = -jac.transpose() * ldlt.solve(c);
        last.coords() += delta;
    }
    const Vec3 c = closing_skew(f, steps);
    return c.allFinite() && c.norm() < 1e-13;
}

Path initial_path(const DissipationSpec& s, const Mat3& f, int n) {
    Path path;
    if (n == 1) {
        path.cost = safe_cost(s, f);
        return path;
    }
    // Exponential path when log F is already symmetric trace-free.
    if ((f - Mat3::Identity()).norm() < 1.0) {
        const Mat3 l = f.log();
        const SymDev3 lp = SymDev3::project(l);
        path.steps.assign(n - 1, (1.0 / n) * lp);
        path.cost = path_cost(s, f, path.steps);
        if (std::isfinite(path.cost)) return path;
        // Otherwise split off a symmetric first step and close the path.
        path.steps.assign(n - 1, (1.0 / n) * lp);
        if (restore_feasibility(f, path.steps)) path.cost = path_cost(s, f, path.steps);
    }
    return path;
}

Path optimize_path(const DissipationSpec& s, const Mat3& f, int n, int n_iters) {
    Path path;
    if (n % 2 == 0) {
        // Refine the half-resolution optimum: splitting every step in two
        // leaves the cost unchanged, so the local search can only improve on it.
        const Path coarse = optimize_path(s, f, n / 2, n_iters);
        if (std::isfinite(coarse.cost)) {
            for (const auto& st : coarse.steps) {
                path.steps.push_back(0.5 * st);
                path.steps.push_back(0.5 * st);
            }
            const Mat3 closing = f * product(coarse.steps).inverse();
            path.steps.push_back(0.5 * SymDev3::project(closing.log()));
            path.cost = path_cost(s, f, path.steps);
        }
        if (!std::isfinite(path.cost)) path = initial_path(s, f, n);
    } else {
        path = initial_path(s, f, n);
    }
    if (path.steps.empty() || !std::isfinite(path.cost)) return path;

    // Pattern search over the free steps with feasibility restoration.
    double scale = 0.0;
    for (const auto& st : path.steps) scale = std::max(scale, st.norm());
    double delta = 0.25 * std::max(scale, 1e-6);
    for (int sweep = 0; sweep < n_iters && delta > 1e-10; ++sweep) {
        bool improved = false;
        for (std::size_t k = 0; k < path.steps.size(); ++k) {
            for (int i = 0; i < 5; ++i) {
                for (const double sign : {1.0, -1.0}) {
                    std::vector<SymDev3> trial = path.steps;
                    trial[k].coords()[i] += sign * delta;
                    if (!restore_feasibility(f, trial)) continue;
                    const double c = path_cost(s, f, trial);
                    if (c < path.cost - 1e-15) {
                        path.steps = std::move(trial);
                        path.cost = c;
                        improved = true;
                    }
                }
            }
        }
        if (!improved) delta *= 0.5;
    }
    return path;
}

}  // namespace

double dissipation_upper_exp(const DissipationSpec& s, const Mat3& f) {
    if (!is_unimodular(f, kDetTol)) return kInfinity;
    return exp_path_cost(s, f);
}

double dissipation_path_opt(const DissipationSpec& s, const Mat3& f, int n_segments, int n_iters) {
    if (!is_unimodular(f, kDetTol)) throw DeterminantError("dissipation path requires det F = 1");
    if (n_segments < 1) throw Error("n_segments must be at least 1");
    if ((f - Mat3::Identity()).norm() == 0.0) return 0.0;
    const double bound = safe_cost(s, f);
    const Path p = optimize_path(s, f, n_segments, n_iters);
    return std::min(p.cost, bound);
}

double dissipation_distance(const DissipationSpec& s, const Mat3& f1, const Mat3& f2, int n_segments,
                            int n_iters) {
    if (!(f1.determinant() > 0.0)) return kInfinity;
    const Mat3 rel = f2 * f1.inverse();
    if (!is_unimodular(rel, kDetTol)) return kInfinity;
    return dissipation_path_opt(s, rel, n_segments, n_iters);
}

// -------------------------------------------------------------------- prox

const Eigen::Matrix<double, 3, 5>& minor_map() {
    static const Eigen::Matrix<double, 3, 5> t = [] {
        Eigen::Matrix<double, 3, 5> m;
        for (int i = 0; i < 5; ++i) m.col(i) = to_mandel(Mat2(minor2(SymDev3::basis(i))));
        return m;
    }();
    return t;
}

double prox_objective(const ReducedForm& r, const MaterialParams& m, const DissipationSpec& s, const Mat2& e,
                      const SymDev3& p0, const SymDev3& p) {
    const Mandel3 el = to_mandel(e) - minor_map() * p.coords();
    return r.q2(el) + hardening_B(m, p) + h_d(s, p - p0);
}

ProxResult plastic_prox(const ReducedForm& r, const MaterialParams& m, const DissipationSpec& s, const Mat2& e,
                        const SymDev3& p0) {
    const auto& t = minor_map();
    const Mat5 hess = t.transpose() * r.q2_matrix() * t + m.k_hard * Mat5::Identity();
    const Vec5 b = t.transpose() * r.q2_matrix() * to_mandel(e);
    const Vec5 c0 = p0.coords();

    ProxResult out;
    if (s.kind == DissipationSpec::Kind::von_mises) {
        // Shifted problem in d = c - c0:  1/2 d'Hd - r'd + sigma |d|.
        const double sigma = s.sigma_y;
        const Vec5 rr = b - hess * c0;
        if (rr.norm() <= sigma) {
            out.p = p0;
            out.residual = 0.0;
        } else {
            Eigen::SelfAdjointEigenSolver<Mat5> es(hess);
            const Vec5 lam = es.eigenvalues();
            const Vec5 rt = es.eigenvectors().transpose() * rr;
            // Radius t = |d| solves psi(t) = sum rt_i^2 / (lam_i t + sigma)^2 = 1;
            // psi is convex decreasing, so Newton from t = 0 increases monotonically.
            double tt = 0.0;
            for (int it = 0; it < 200; ++it) {
                double psi = 0.0, dpsi = 0.0;
                for (int i = 0; i < 5; ++i) {
                    const double den = lam[i] * tt + sigma;
                    psi += rt[i] * rt[i] / (den * den);
                    dpsi += -2.0 * lam[i] * rt[i] * rt[i] / (den * den * den);
                }
                const double step = (psi - 1.0) / dpsi;
                const double next = tt - step;
                ++out.iterations;
                if (!(next > tt) || std::abs(next - tt) <= 1e-16 * next) {
                    tt = std::max(tt, next);
                    break;
                }
                tt = next;
            }
            Vec5 dt;
            for (int i = 0; i < 5; ++i) dt[i] = tt * rt[i] / (lam[i] * tt + sigma);
            const Vec5 d = es.eigenvectors() * dt;
            out.p = SymDev3(Vec5(c0 + d));
            const double dn = d.norm();
            const Vec5 g = hess * out.p.coords() - b;
            out.residual = dn > 0.0 ? (g + sigma * d / dn).norm() : std::max(0.0, g.norm() - sigma);
        }
    } else {
        if (!s.prox) throw Error("custom dissipation requires a prox callback");
        Eigen::SelfAdjointEigenSolver<Mat5> es(hess);
        const double step = 1.0 / es.eigenvalues().maxCoeff();
        Vec5 c = c0;
        Vec5 last_move = Vec5::Constant(kInfinity);
        for (int it = 0; it < 200000; ++it) {
            const Vec5 grad = hess * c - b;
            const Vec5 z = c - step * grad - c0;
            const Vec5 next = c0 + s.prox(SymDev3(z), step).coords();
            last_move = next - c;
            c = next;
            ++out.iterations;
            // Gradient-mapping residual bounds dist(0, subdifferential) at c.
            const double res = (last_move / step).norm() + (hess * last_move).norm();
            if (res <= 1e-10) break;
        }
        out.p = SymDev3(c);
        out.residual = (last_move / step).norm() + (hess * last_move).norm();
    }
    out.objective = prox_objective(r, m, s, e, p0, out.p);
    return out;
}

}  // namespace plateplast
