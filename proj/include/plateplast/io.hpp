#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "plateplast/limit_solver.hpp"
#include "plateplast/moments.hpp"
#include "plateplast/three_d.hpp"

namespace plateplast {

inline constexpr int kSchemaVersion = 1;

struct ProblemConfig {
    // [domain]
    int nx = 17, ny = 17;
    double lx = 1.0, ly = 1.0;
    std::vector<Edge> gamma_d;
    int n_x3 = 4;
    int nz = 9;
    // [material]
    double lambda = 1.0, mu = 1.0, k_hard = 1.0, sigma_y = 0.1, rho_K = 0.5;
    // [model]
    double alpha = 4.0;
    // [bc]
    Poly2 u0x, u0y, v0;
    // [p0]
    std::string p0_preset = "zero";  // zero | constant | linear_x3
    SymDev3 p0_coeffs;
    // [solver]
    SolverOptions solver;
    // [study]
    std::vector<double> eps = {0.1, 0.05, 0.025, 0.0125};

    nlohmann::json to_json() const;
};

/// Parses `key = value` sections [domain] [material] [model] [bc] [p0] [solver] [study].
/// Throws ConfigError listing every violation found.
ProblemConfig parse_config(const std::string& text);
/// Reads and parses a file; IoError when it cannot be read.
ProblemConfig load_config(const std::string& path);

PlateModel build_model(const ProblemConfig& cfg);
Grid3D build_grid3d(const ProblemConfig& cfg);
/// p0 per (node, x3 Gauss point) from the preset.
std::vector<SymDev3> build_p0(const ProblemConfig& cfg, const PlateGrid& grid);

/// Minimizes the limit functional from the boundary extension and p = p0:
/// alternating scheme for alpha > 3, von Karman descent for alpha = 3.
SolveReport solve_limit(const PlateModel& model, const ProblemConfig& cfg, DisplacementState& st, PlasticField& pf);

/// Numbers become JSON numbers when finite and the strings "inf", "-inf", "nan" otherwise.
nlohmann::json num(double x);
double from_num(const nlohmann::json& j);

nlohmann::json to_json(const EnergyBreakdown& e);
nlohmann::json to_json(const SolveReport& r);
nlohmann::json to_json(const ReductionReport& r);
nlohmann::json to_json(const Energy3D& e);
nlohmann::json to_json(const ConvergenceTable& t);

/// {"schema_version", "command", "config"}; results are added by the caller.
nlohmann::json report_envelope(const std::string& command, const ProblemConfig* cfg);

void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

/// CSV with a header line and %.17g numbers; reading back is bitwise exact.
void write_csv(const std::string& path, const Table& t);
Table read_csv(const std::string& path);

Table study_table(const ConvergenceTable& t);
Table displacement_table(const PlateGrid& g, const DisplacementState& st);
/// One row per (node, x3 sample): node, q, x, y, x3, five coordinates of p.
Table plastic_table(const PlateGrid& g, const std::vector<SymDev3>& p);
/// One row per node: node, x, y, five coordinates of the moment field.
Table moment_table(const PlateGrid& g, const std::vector<SymDev3>& m);

}  // namespace plateplast
