#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Sparse>

#include "plateplast/plate.hpp"
#include "plateplast/plasticity.hpp"
#include "plateplast/tensor_core.hpp"

namespace plateplast {

struct SolverOptions {
    double tol = 1e-10;       // relative energy decrease per sweep
    double cg_tol = 1e-10;    // relative residual
    int max_outer = 500;
    int n_restarts = 3;       // von Karman only
    double grad_tol = 1e-6;   // von Karman certificate
    int max_vk_iters = 300;
    double restart_amplitude = 1e-2;
    std::uint64_t seed = 12345;
    bool freeze_plastic = false;  // keep p = p0
};

struct SolveReport {
    bool converged = false;
    bool flagged = false;
    int iterations = 0;
    std::vector<double> energy_trace;  // after every half-step
    EnergyBreakdown energy;
    int cg_iterations = 0;
    double max_cg_residual = 0.0;
    double max_prox_residual = 0.0;
    int monotone_violations = 0;
    double terminal_improvement = 0.0;  // relative, one extra sweep after stopping
    // von Karman
    double grad_norm = 0.0;
    int line_search_failures = 0;
    std::vector<double> restart_energies;
};

/// Discrete limit model: grid, boundary data, material. Nodal Q1 membrane
/// displacements, nodal deflection with ghost-node second differences, and
/// plastic samples at (node, x3 Gauss point).
class PlateModel {
public:
    PlateModel(PlateGrid grid, BoundaryData bc, const ElasticTensor& c, MaterialParams m, DissipationSpec s);

    const PlateGrid& grid() const { return grid_; }
    const BoundaryData& bc() const { return bc_; }
    const ReducedForm& reduced() const { return rf_; }
    const MaterialParams& material() const { return m_; }
    const DissipationSpec& dissipation() const { return s_; }

    /// u = u0, v = v0 at every node.
    DisplacementState boundary_extension() const;
    /// Throws AdmissibilityError unless u = u0 and v = v0 on clamped nodes.
    void check_admissible(const DisplacementState& st) const;
    /// Resets clamped nodal values to the boundary data.
    void impose_dirichlet(DisplacementState& st) const;
    PlasticField make_plastic_field() const;

    int n_gauss() const { return static_cast<int>(gp_owner_.size()); }
    /// Membrane strain sym grad u [+ 1/2 grad v (x) grad v] at membrane Gauss points (Mandel).
    std::vector<Mandel3> membrane_strain(const DisplacementState& st, bool von_karman) const;
    /// Area-weighted mean of the membrane strain over each node's dual cell.
    std::vector<Mandel3> node_membrane_strain(const DisplacementState& st, bool von_karman) const;
    /// Nodal Hessian of v (Mandel), ghost nodes carry the clamping.
    std::vector<Mandel3> curvature(const Eigen::VectorXd& v) const;
    /// Nodal central-difference gradient of v.
    std::vector<Vec2> slope(const Eigen::VectorXd& v) const;

    EnergyBreakdown eval_J(double alpha, const DisplacementState& st, const PlasticField& pf) const;
    /// Gradient of the elastic part of eval_J with respect to all nodal (ux, uy, v) at fixed p.
    DisplacementState grad_J(double alpha, const DisplacementState& st, const PlasticField& pf) const;

    /// Minimizes sum_gp w Q2(sym grad u - target_gp) over admissible u (warm start).
    void solve_membrane(const std::vector<Mandel3>& target_gp, DisplacementState& st, SolveReport* rep) const;
    /// Minimizes sum_n A_n Q2(hess v - target_n) over admissible v (warm start).
    void solve_bending(const std::vector<Mandel3>& target_node, DisplacementState& st, SolveReport* rep) const;
    /// Preconditioner step for von Karman descent: solves K_bend d = r on free deflection dofs.
    Eigen::VectorXd bending_solve(const Eigen::VectorXd& rhs_all, SolveReport* rep) const;

    /// Owner node of a membrane Gauss point, and its weight.
    int gauss_owner(int g) const { return gp_owner_[g]; }
    double gauss_weight(int g) const { return tmpl_[g % 16].w; }
    void set_cg_tolerance(double tol) const { cg_tol_ = tol; }

private:
    struct Template {
        int corner;
        double w;
        double n[4], dx[4], dy[4];
    };
    struct LinearSystem {
        Eigen::SparseMatrix<double> kff, kfd;
        std::vector<int> free, fixed;
        mutable Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                                         Eigen::IncompleteCholesky<double>>
            cg;
    };
    static void setup_system(LinearSystem& sys, const Eigen::SparseMatrix<double>& k, const std::vector<char>& fixed);
    /// Solves K x = rhs on free dofs; fixed entries of x_all are kept.
    void solve_system(const LinearSystem& sys, const Eigen::VectorXd& rhs_all, Eigen::VectorXd& x_all,
                      SolveReport* rep) const;

    int cell_corner(int cell, int a) const;
    Vec2 gauss_slope(const std::vector<Vec2>& g, int gp) const;
    void build_membrane();
    void build_bending();
    void local_b(int gp, Eigen::Matrix<double, 3, 8>& b) const;

    PlateGrid grid_;
    BoundaryData bc_;
    ReducedForm rf_;
    MaterialParams m_;
    DissipationSpec s_;

    std::vector<Template> tmpl_;
    std::vector<int> gp_owner_;
    std::vector<std::vector<int>> node_gps_;

    // Affine maps v -> slope (2N rows) and v -> Mandel Hessian (3N rows).
    Eigen::SparseMatrix<double, Eigen::RowMajor> grad_op_, hess_op_;
    Eigen::VectorXd grad_off_, hess_off_;

    // Shared so copies of the model keep the solvers bound to live matrices.
    std::shared_ptr<LinearSystem> mem_, bend_;
    mutable double cg_tol_ = 1e-10;
};

/// Alternating minimization of J_alpha, alpha > 3. Starts from `st`/`pf` when
/// given (must be admissible), otherwise from the boundary extension and p = p0.
SolveReport minimize_linear(const PlateModel& model, double alpha, DisplacementState& st, PlasticField& pf,
                            const SolverOptions& opt = {});

/// Critical point of J_3: preconditioned descent on v, inner alternating
/// minimization over (u, p), random restarts around the boundary extension.
SolveReport minimize_vk(const PlateModel& model, DisplacementState& st, PlasticField& pf,
                        const SolverOptions& opt = {});

/// One block sweep of the alternating scheme at fixed exponent; returns energies after each half.
struct SweepResult {
    double after_displacement = 0.0;
    double after_plastic = 0.0;
};
SweepResult alternating_sweep(const PlateModel& model, double alpha, DisplacementState& st, PlasticField& pf,
                              bool solve_v, bool freeze_plastic, SolveReport* rep);

}  // namespace plateplast
