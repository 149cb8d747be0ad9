#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "plateplast/plasticity.hpp"
#include "plateplast/tensor_core.hpp"

namespace plateplast {

enum class Edge { left, right, bottom, top };

std::string to_string(Edge e);
/// Parses "left", "right", "bottom" or "top"; throws ConfigError otherwise.
Edge edge_from_string(const std::string& s);

/// Gauss-Legendre rule on (-1/2, 1/2).
struct Quadrature1D {
    std::vector<double> x;
    std::vector<double> w;
};
Quadrature1D gauss_legendre_half(int n);

/// Uniform node grid on [0, lx] x [0, ly] times a Gauss rule in x3.
/// Clamped edges (gamma_d) are whole grid edges; the rest is free.
class PlateGrid {
public:
    PlateGrid(int nx, int ny, double lx, double ly, std::vector<Edge> gamma_d, int n_x3 = 4);

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    double lx() const { return lx_; }
    double ly() const { return ly_; }
    double hx() const { return hx_; }
    double hy() const { return hy_; }
    int n_nodes() const { return nx_ * ny_; }
    int n_cells() const { return (nx_ - 1) * (ny_ - 1); }
    int n_x3() const { return static_cast<int>(x3_.x.size()); }
    int node(int i, int j) const { return j * nx_ + i; }
    double x(int i) const { return i * hx_; }
    double y(int j) const { return j * hy_; }

    const std::vector<Edge>& gamma_d() const { return gamma_d_; }
    bool clamped(Edge e) const;
    /// 1 on nodes lying on a clamped edge.
    const std::vector<char>& dirichlet_mask() const { return dirichlet_; }
    /// Dual-cell (trapezoid) areas; they sum to lx * ly.
    const std::vector<double>& node_area() const { return area_; }
    const Quadrature1D& x3_quad() const { return x3_; }

private:
    int nx_, ny_;
    double lx_, ly_, hx_, hy_;
    std::vector<Edge> gamma_d_;
    std::vector<char> dirichlet_;
    std::vector<double> area_;
    Quadrature1D x3_;
};

/// Polynomial of total degree <= 3 in (x, y), coefficients ordered
/// 1, x, y, x^2, xy, y^2, x^3, x^2 y, x y^2, y^3.
struct Poly2 {
    std::array<double, 10> c{};

    double operator()(double x, double y) const;
    Vec2 grad(double x, double y) const;
    Mat2 hess(double x, double y) const;
    bool is_zero() const;
};

struct BoundaryData {
    Poly2 u0x, u0y, v0;

    Vec2 u0(double x, double y) const { return Vec2(u0x(x, y), u0y(x, y)); }
    Vec2 grad_v0(double x, double y) const { return v0.grad(x, y); }
    /// Largest deviation between grad_v0 and central differences of v0 at sample points.
    double gradient_consistency(double lx, double ly) const;
};

struct DisplacementState {
    Eigen::VectorXd ux, uy, v;

    static DisplacementState zeros(int n) {
        return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
    }
};

/// Plastic strain per (node, x3 point), flattened as node * n_x3 + q.
struct PlasticField {
    int n_x3 = 0;
    std::vector<SymDev3> p;
    std::vector<SymDev3> p0;

    PlasticField() = default;
    PlasticField(int n_nodes, int nq) : n_x3(nq), p(static_cast<std::size_t>(n_nodes) * nq), p0(p.size()) {}

    SymDev3& at(int node, int q) { return p[static_cast<std::size_t>(node) * n_x3 + q]; }
    const SymDev3& at(int node, int q) const { return p[static_cast<std::size_t>(node) * n_x3 + q]; }
    SymDev3& at0(int node, int q) { return p0[static_cast<std::size_t>(node) * n_x3 + q]; }
    const SymDev3& at0(int node, int q) const { return p0[static_cast<std::size_t>(node) * n_x3 + q]; }
};

struct EnergyBreakdown {
    double elastic_2d = 0.0;
    double hardening = 0.0;
    double dissipation = 0.0;
    double total = 0.0;
};

}  // namespace plateplast
