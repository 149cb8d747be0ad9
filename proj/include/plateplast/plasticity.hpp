#pragma once

#include <functional>
#include <limits>

#include "plateplast/tensor_core.hpp"

namespace plateplast {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Hardening B(F) = 1/2 k |F|^2, hardening set K = {F in SL(3): |F - Id| <= rho_K},
/// von Mises yield coefficient sigma_y.
struct MaterialParams {
    double k_hard = 1.0;
    double sigma_y = 1.0;
    double rho_K = 0.5;

    /// Throws InvalidMaterialError unless k > 0, sigma_y > 0, 0 < rho_K < 1.
    void validate() const;
    /// Lower constant c3 in (c3/2)|F|^2 <= B(F).
    double c3() const { return k_hard; }
    /// Bound c_k on |F| + |F^-1| over K.
    double c_k() const { return 3.0 + rho_K; }
};

/// Convex, positively one-homogeneous dissipation potential on M_D.
struct DissipationSpec {
    enum class Kind { von_mises, custom };

    Kind kind = Kind::von_mises;
    double sigma_y = 1.0;
    /// Growth constants r_K |xi| <= H_D(xi) <= R_K |xi|.
    double r_K = 1.0;
    double R_K = 1.0;
    /// H_D(-xi) == H_D(xi).
    bool even = true;

    // Custom potentials only.
    std::function<double(const SymDev3&)> value;
    /// Some element of the subdifferential at xi.
    std::function<SymDev3(const SymDev3&)> subgradient;
    /// argmin_x t H_D(x) + 1/2 |x - z|^2.
    std::function<SymDev3(const SymDev3& z, double t)> prox;

    static DissipationSpec von_mises(double sigma_y);
};

double hardening_B(const MaterialParams& m, const Mat3& f);
inline double hardening_B(const MaterialParams& m, const SymDev3& p) {
    return 0.5 * m.k_hard * p.coords().squaredNorm();
}

/// B(F - Id) on K, +infinity outside.
double w_hard(const MaterialParams& m, const Mat3& f);

double h_d(const DissipationSpec& s, const SymDev3& xi);
/// H: equals H_D on symmetric trace-free matrices (within `tol`), +infinity elsewhere.
double h_full(const DissipationSpec& s, const Mat3& f, double tol = 1e-9);

/// H_D(log F) along the exponential path; an upper bound for D(Id, F).
/// +infinity when det F != 1 or log F is not symmetric trace-free.
/// Throws OutOfNeighborhoodError when |F - Id| >= 1.
double dissipation_upper_exp(const DissipationSpec& s, const Mat3& f);

/// Upper bound for D(Id, F) from a locally optimized piecewise-exponential
/// path with `n_segments` pieces. Never exceeds dissipation_upper_exp, and
/// is nonincreasing under doubling of `n_segments`.
/// Throws DeterminantError when F is not in SL(3).
double dissipation_path_opt(const DissipationSpec& s, const Mat3& f, int n_segments = 4, int n_iters = 8);

/// D(F1, F2) = D(Id, F2 F1^-1), +infinity when det F1 <= 0 or F2 F1^-1 is not unimodular.
double dissipation_distance(const DissipationSpec& s, const Mat3& f1, const Mat3& f2, int n_segments = 4,
                            int n_iters = 8);

struct ProxResult {
    SymDev3 p;
    double objective = 0.0;
    /// Distance of 0 to the subdifferential of the objective at p.
    double residual = 0.0;
    int iterations = 0;
};

/// Pointwise plastic update: argmin over p in M_D of
///   Q2(e - p') + B(p) + H_D(p - p0).
ProxResult plastic_prox(const ReducedForm& r, const MaterialParams& m, const DissipationSpec& s, const Mat2& e,
                        const SymDev3& p0);

/// Objective of plastic_prox at a given p.
double prox_objective(const ReducedForm& r, const MaterialParams& m, const DissipationSpec& s, const Mat2& e,
                      const SymDev3& p0, const SymDev3& p);

/// Mandel coordinates of p' as a linear map of SymDev3 coordinates.
const Eigen::Matrix<double, 3, 5>& minor_map();

}  // namespace plateplast
