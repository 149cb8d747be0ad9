#pragma once

#include <utility>
#include <vector>

#include <Eigen/Sparse>

#include "plateplast/limit_solver.hpp"

namespace plateplast {

/// 3D grid over the scaled plate: the 2D footprint times `nz` uniform x3 nodes
/// in [-1/2, 1/2] (nz odd). Node index is node2d * nz + k. Integration is
/// trapezoid in-plane and Simpson in x3; derivatives are second-order finite
/// differences (central inside, one-sided on the faces).
class Grid3D {
public:
    Grid3D(PlateGrid footprint, int nz = 9);

    const PlateGrid& plate() const { return plate_; }
    int nz() const { return nz_; }
    int n_nodes() const { return plate_.n_nodes() * nz_; }
    int index(int node2d, int k) const { return node2d * nz_ + k; }
    const std::vector<double>& z() const { return z_; }
    const std::vector<double>& z_weights() const { return wz_; }
    /// Quadrature weight of every 3D node.
    const std::vector<double>& weights() const { return w_; }
    /// d/dx1, d/dx2, d/dx3 on scalar nodal fields (the x3 one without 1/eps).
    const Eigen::SparseMatrix<double, Eigen::RowMajor>& diff(int axis) const { return d_[axis]; }
    /// In-plane derivative operators on 2D nodal fields, same stencils.
    const Eigen::SparseMatrix<double, Eigen::RowMajor>& diff2d(int axis) const { return d2_[axis]; }

private:
    PlateGrid plate_;
    int nz_;
    std::vector<double> z_, wz_, w_;
    Eigen::SparseMatrix<double, Eigen::RowMajor> d_[3], d2_[2];
};

struct Deformation3D {
    double epsilon = 0.0;
    std::vector<Vec3> y;
};

struct PlasticStrain3D {
    double epsilon = 0.0;
    double alpha = 0.0;
    std::vector<Mat3> P, P0;
};

/// St. Venant-Kirchhoff density Q(E), E = (F^T F - Id)/2.
double w_el_svk(const ElasticTensor& c, const Mat3& f);
/// Same density from the displacement gradient H = F - Id, without cancellation.
double w_el_svk_disp(const ElasticTensor& c, const Mat3& h);

/// Prescribed deformation on the clamped lateral boundary at scaled point (x1, x2, x3).
Vec3 boundary_datum(const BoundaryData& bc, double alpha, double epsilon, double x1, double x2, double x3);
/// The datum evaluated at every node of the grid.
Deformation3D datum_field(const Grid3D& g, const BoundaryData& bc, double alpha, double epsilon);
/// Reference configuration (x', eps x3).
Deformation3D identity_plate(const Grid3D& g, double epsilon);

struct Energy3D {
    EnergyBreakdown energy;         // elastic_2d holds the 3D elastic part
    int nonpositive_det = 0;        // samples with det grad_eps y <= 0
    int outside_K = 0;              // samples where the hardening term is infinite
    int nonsymmetric_log = 0;       // samples where the dissipation surrogate used sym dev of log
    bool dissipation_is_surrogate = true;
};

/// Scaled 3D energy: eps^{2-2a} [int W_el(grad_eps y P^-1) + int W_hard(P)] + eps^{1-a} int D(P0, P),
/// with D replaced by H_D(log(P P0^-1)).
Energy3D energy_3d(double alpha, const ElasticTensor& c, const MaterialParams& m, const DissipationSpec& s,
                   const Grid3D& g, const Deformation3D& def, const PlasticStrain3D& ps);

/// Plastic samples of a 2D field moved from the x3 Gauss points to the x3 nodes
/// of `g` by Lagrange interpolation (exact for polynomials of degree < n_x3).
std::vector<SymDev3> plastic_on_nodes(const Grid3D& g, const std::vector<SymDev3>& p);

/// Transverse field d per 3D node such that Q(sym(G | d) - p) = Q2(G' - p') pointwise,
/// with G built from the grid's difference operators.
std::vector<Vec3> optimal_transverse(const PlateModel& model, const Grid3D& g, const DisplacementState& st,
                                     const PlasticField& pf, double alpha);

/// Recovery pair y = (x', eps x3) + eps^{a-1}(u - x3 grad v, 0) + eps^{a-2}(0, 0, v) + eps^a int d,
/// P = exp(eps^{a-1} p), P0 = exp(eps^{a-1} p0). grad v is the grid's difference gradient.
/// Throws KExitError when eps^{a-1} max|p| >= rho_K.
std::pair<Deformation3D, PlasticStrain3D> recovery_sequence(const PlateModel& model, const Grid3D& g,
                                                            const DisplacementState& st, const PlasticField& pf,
                                                            const std::vector<Vec3>& d, double alpha, double epsilon);

struct Extracted {
    std::vector<Vec2> u;
    std::vector<double> v;
    std::vector<Vec3> xi;
};

/// Thickness averages of the in-plane and out-of-plane displacements and the first moment.
Extracted extract_displacements(const Grid3D& g, const Deformation3D& def, double alpha);

/// J_alpha(u, v, p) with the 3D grid's operators and quadrature: the value the
/// recovery energies converge to on this grid.
EnergyBreakdown limit_energy_on_grid(const PlateModel& model, const Grid3D& g, const DisplacementState& st,
                                     const PlasticField& pf, double alpha);

struct StudyRow {
    double epsilon = 0.0;
    double total = 0.0, elastic = 0.0, hardening = 0.0, dissipation = 0.0;
    double ratio_total = 0.0, ratio_elastic = 0.0, ratio_hardening = 0.0, ratio_dissipation = 0.0;
    double ratio_total_2d = 0.0;  // against the 2D solver's eval_J
    int nonpositive_det = 0, outside_K = 0, nonsymmetric_log = 0;
};

struct ConvergenceTable {
    EnergyBreakdown limit;     // limit_energy_on_grid
    EnergyBreakdown limit_2d;  // PlateModel::eval_J
    std::vector<StudyRow> rows;
    /// Smallest C with dissipation <= limit dissipation (1 + 1e-3) + C eps^{a-1} on the first row.
    double dissipation_constant = 0.0;
    /// Whether the remaining rows respect the bound with that C.
    bool dissipation_bound_holds = true;
};

/// Builds the recovery pair with optimal_transverse for each eps (strictly decreasing list).
ConvergenceTable convergence_study(const PlateModel& model, const Grid3D& g, const DisplacementState& st,
                                   const PlasticField& pf, double alpha, const std::vector<double>& eps_list);

struct Solve3DOptions {
    int max_outer = 30;
    int max_lbfgs_iters = 500;
    double tol = 1e-8;  // relative energy decrease per outer iteration
};

struct Solve3DReport {
    Energy3D energy;
    int iterations = 0;
    bool converged = false;
    std::vector<double> energy_trace;
    Deformation3D deformation;
    PlasticStrain3D plastic;
};

/// Exploratory direct minimization of the scaled 3D energy: LBFGS in y with the
/// clamped nodes fixed to the datum, alternated with a linearized pointwise
/// plastic update that is kept only when the exact energy decreases.
/// p0 is per (2D node, x3 Gauss point) as in PlasticField.
Solve3DReport solve_3d(const PlateModel& model, const Grid3D& g, const std::vector<SymDev3>& p0, double alpha,
                       double epsilon, const Solve3DOptions& opt = {});

}  // namespace plateplast
