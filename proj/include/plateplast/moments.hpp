#pragma once

#include <vector>

#include "plateplast/limit_solver.hpp"

namespace plateplast {

/// p = p_bar + x3 p_hat + p_perp per node, with p_perp orthogonal to 1 and x3
/// under the x3 quadrature.
struct MomentDecomposition {
    int n_x3 = 0;
    std::vector<SymDev3> p_bar;
    std::vector<SymDev3> p_hat;
    std::vector<SymDev3> p_perp;  // node * n_x3 + q

    /// Largest |sum_q w_q p_perp| and |sum_q w_q x3_q p_perp| over nodes.
    double orthogonality_defect(const Quadrature1D& quad) const;
    /// Largest |p_bar + x3 p_hat + p_perp - p| over samples.
    double reconstruction_defect(const Quadrature1D& quad, const std::vector<SymDev3>& p) const;
};

MomentDecomposition decompose(const std::vector<SymDev3>& p, const PlateGrid& grid);
inline MomentDecomposition decompose(const PlasticField& pf, const PlateGrid& grid) { return decompose(pf.p, grid); }

/// The seven terms of the moment-split form of J_alpha.
struct SplitBreakdown {
    double membrane = 0.0;     // Q2(membrane strain - p_bar')
    double bending = 0.0;      // 1/12 Q2(hess v + p_hat')
    double perp_elastic = 0.0; // Q2(p_perp')
    double hard_bar = 0.0;     // B(p_bar)
    double hard_hat = 0.0;     // 1/12 B(p_hat)
    double hard_perp = 0.0;    // B(p_perp)
    double dissipation = 0.0;  // H_D(p - p0)
    double total = 0.0;
};

SplitBreakdown eval_J_split(const PlateModel& model, double alpha, const DisplacementState& st, const PlasticField& pf);

/// Membrane functional on u and x3-constant plastic strains (per node).
EnergyBreakdown eval_J_bar(const PlateModel& model, const DisplacementState& st, const std::vector<SymDev3>& p_bar,
                           const std::vector<SymDev3>& p0_bar);
/// Bending functional on v and first moments (per node).
EnergyBreakdown eval_J_hat(const PlateModel& model, const DisplacementState& st, const std::vector<SymDev3>& p_hat,
                           const std::vector<SymDev3>& p0_hat);

/// Alternating minimization of the reduced functionals; p is updated in place
/// (starting value p0 if sizes do not match).
SolveReport minimize_J_bar(const PlateModel& model, DisplacementState& st, std::vector<SymDev3>& p_bar,
                           const std::vector<SymDev3>& p0_bar, const SolverOptions& opt = {});
SolveReport minimize_J_hat(const PlateModel& model, DisplacementState& st, std::vector<SymDev3>& p_hat,
                           const std::vector<SymDev3>& p0_hat, const SolverOptions& opt = {});

struct ReductionReport {
    double min_full = 0.0;     // min J_alpha
    double min_reduced = 0.0;  // min J_bar, or min J_hat / 12
    double rel_gap = 0.0;
    double v_inf = 0.0;                 // membrane check
    double x3_variation = 0.0;          // membrane check: max |p(x3) - p_bar|
    double jensen_lhs = 0.0;            // int H_D(p - p0)
    double jensen_rhs = 0.0;            // int H_D(p_bar - p0_bar) or 1/12 int H_D(p_hat - p0_hat)
    bool jensen_holds = true;
    double linear_profile_correlation = 0.0;  // bending check: cosine between p and x3 p_hat
    SolveReport full, reduced;
    DisplacementState state;
    PlasticField plastic;
};

/// Requires alpha > 3, v0 = 0 and p0 constant in x3; throws HypothesisError otherwise.
ReductionReport check_membrane_reduction(const PlateModel& model, double alpha, const std::vector<SymDev3>& p0,
                                         const SolverOptions& opt = {});
/// Requires alpha > 3, u0 = 0, p0 = x3 p0_hat and an even homogeneous H_D.
ReductionReport check_bending_reduction(const PlateModel& model, double alpha, const std::vector<SymDev3>& p0,
                                        const SolverOptions& opt = {});

}  // namespace plateplast
