#include "plateplast/plate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "plateplast/errors.hpp"

namespace plateplast {

std::string to_string(Edge e) {
    switch (e) {
        case Edge::left: return "left";
        case Edge::right: return "right";
        case Edge::bottom: return "bottom";
        case Edge::top: return "top";
    }
    return "?";
}

Edge edge_from_string(const std::string& s) {
    if (s == "left") return Edge::left;
    if (s == "right") return Edge::right;
    if (s == "bottom") return Edge::bottom;
    if (s == "top") return Edge::top;
    throw ConfigError({"unknown edge '" + s + "' (expected left, right, bottom or top)"});
}

Quadrature1D gauss_legendre_half(int n) {
    if (n < 1) throw ConfigError({"x3 quadrature needs at least one point"});
    Quadrature1D q;
    q.x.resize(n);
    q.w.resize(n);
    // Newton iteration on P_n from the Chebyshev guess.
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double t = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 1.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = t;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (t * p1 - p0) / (t * t - 1.0);
            const double step = p1 / dp;
            t -= step;
            if (std::abs(step) < 1e-17) break;
        }
        const double w = 2.0 / ((1.0 - t * t) * dp * dp);
        q.x[i] = -0.5 * t;
        q.x[n - 1 - i] = 0.5 * t;
        q.w[i] = q.w[n - 1 - i] = 0.5 * w;
    }
    if (n % 2 == 1) q.x[n / 2] = 0.0;
    return q;
}

PlateGrid::PlateGrid(int nx, int ny, double lx, double ly, std::vector<Edge> gamma_d, int n_x3)
    : nx_(nx), ny_(ny), lx_(lx), ly_(ly), gamma_d_(std::move(gamma_d)) {
    std::vector<std::string> errs;
    if (nx < 3 || ny < 3) errs.push_back("grid needs at least 3 nodes per direction");
    if (!(lx > 0.0) || !(ly > 0.0)) errs.push_back("plate side lengths must be positive");
    if (gamma_d_.empty()) errs.push_back("gamma_d must be nonempty (clamped boundary of positive length)");
    if (n_x3 < 2) errs.push_back("x3 quadrature needs at least 2 points");
    if (!errs.empty()) throw ConfigError(errs);
    std::sort(gamma_d_.begin(), gamma_d_.end());
    gamma_d_.erase(std::unique(gamma_d_.begin(), gamma_d_.end()), gamma_d_.end());

    hx_ = lx / (nx - 1);
    hy_ = ly / (ny - 1);
    dirichlet_.assign(n_nodes(), 0);
    area_.assign(n_nodes(), 0.0);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const double wx = (i == 0 || i == nx - 1) ? 0.5 : 1.0;
            const double wy = (j == 0 || j == ny - 1) ? 0.5 : 1.0;
            area_[node(i, j)] = wx * wy * hx_ * hy_;
            const bool on = (i == 0 && clamped(Edge::left)) || (i == nx - 1 && clamped(Edge::right)) ||
                            (j == 0 && clamped(Edge::bottom)) || (j == ny - 1 && clamped(Edge::top));
            dirichlet_[node(i, j)] = on ? 1 : 0;
        }
    x3_ = gauss_legendre_half(n_x3);
}

bool PlateGrid::clamped(Edge e) const { return std::find(gamma_d_.begin(), gamma_d_.end(), e) != gamma_d_.end(); }

double Poly2::operator()(double x, double y) const {
    return c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y + c[6] * x * x * x +
           c[7] * x * x * y + c[8] * x * y * y + c[9] * y * y * y;
}

Vec2 Poly2::grad(double x, double y) const {
    return Vec2(c[1] + 2 * c[3] * x + c[4] * y + 3 * c[6] * x * x + 2 * c[7] * x * y + c[8] * y * y,
                c[2] + c[4] * x + 2 * c[5] * y + c[7] * x * x + 2 * c[8] * x * y + 3 * c[9] * y * y);
}

Mat2 Poly2::hess(double x, double y) const {
    Mat2 h;
    h(0, 0) = 2 * c[3] + 6 * c[6] * x + 2 * c[7] * y;
    h(1, 1) = 2 * c[5] + 2 * c[8] * x + 6 * c[9] * y;
    h(0, 1) = h(1, 0) = c[4] + 2 * c[7] * x + 2 * c[8] * y;
    return h;
}

bool Poly2::is_zero() const {
    return std::all_of(c.begin(), c.end(), [](double a) { return a == 0.0; });
}

double BoundaryData::gradient_consistency(double lx, double ly) const {
    const double h = 1e-5;
    double worst = 0.0;
    for (int a = 0; a <= 4; ++a)
        for (int b = 0; b <= 4; ++b) {
            const double x = lx * a / 4.0, y = ly * b / 4.0;
            const Vec2 fd((v0(x + h, y) - v0(x - h, y)) / (2 * h), (v0(x, y + h) - v0(x, y - h)) / (2 * h));
            worst = std::max(worst, (fd - grad_v0(x, y)).norm());
        }
    return worst;
}

}  // namespace plateplast
