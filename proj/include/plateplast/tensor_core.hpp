#pragma once

#include <array>

#include <Eigen/Dense>

namespace plateplast {

using Mat3 = Eigen::Matrix3d;
using Mat2 = Eigen::Matrix2d;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
/// Symmetric 3x3 matrix in Mandel coordinates (11, 22, 33, r2*23, r2*13, r2*12).
using Mandel6 = Eigen::Matrix<double, 6, 1>;
/// Symmetric 2x2 matrix in Mandel coordinates (11, 22, r2*12).
using Mandel3 = Eigen::Vector3d;

inline Mat3 sym(const Mat3& f) { return 0.5 * (f + f.transpose()); }
inline Mat2 sym(const Mat2& f) { return 0.5 * (f + f.transpose()); }

/// Upper-left 2x2 minor M'.
inline Mat2 minor2(const Mat3& m) { return m.topLeftCorner<2, 2>(); }

/// 3x3 matrix with `f` in the upper-left block and zeros elsewhere.
inline Mat3 pad(const Mat2& f) {
    Mat3 m = Mat3::Zero();
    m.topLeftCorner<2, 2>() = f;
    return m;
}

bool is_rotation(const Mat3& r, double tol = 1e-10);
bool is_unimodular(const Mat3& f, double tol = 1e-9);

Mandel6 to_mandel(const Mat3& symmetric);
Mat3 from_mandel(const Mandel6& v);
Mandel3 to_mandel(const Mat2& f);  // uses sym f
Mat2 from_mandel(const Mandel3& v);

/// Symmetric trace-free 3x3 matrix stored by its coordinates in an
/// orthonormal (Frobenius) basis of M_D, so |coords| == |matrix|.
class SymDev3 {
public:
    using Coords = Eigen::Matrix<double, 5, 1>;

    SymDev3() : c_(Coords::Zero()) {}
    explicit SymDev3(const Coords& c) : c_(c) {}
    SymDev3(double a, double b, double c, double d, double e) { c_ << a, b, c, d, e; }

    /// Orthogonal projection of sym(m) onto trace-free matrices.
    static SymDev3 project(const Mat3& m);
    /// Basis element i (0..4) as a matrix.
    static Mat3 basis(int i);

    /// Reconstruction; the result is symmetric and has zero trace bit-exactly.
    Mat3 matrix() const;
    const Coords& coords() const { return c_; }
    Coords& coords() { return c_; }
    double operator[](int i) const { return c_[i]; }
    double norm() const { return c_.norm(); }

    SymDev3& operator+=(const SymDev3& o) { c_ += o.c_; return *this; }
    SymDev3& operator-=(const SymDev3& o) { c_ -= o.c_; return *this; }
    friend SymDev3 operator+(SymDev3 a, const SymDev3& b) { return a += b; }
    friend SymDev3 operator-(SymDev3 a, const SymDev3& b) { return a -= b; }
    friend SymDev3 operator*(double s, const SymDev3& a) { return SymDev3(Coords(s * a.c_)); }
    friend bool operator==(const SymDev3& a, const SymDev3& b) { return a.c_ == b.c_; }

private:
    Coords c_;
};

/// Fourth-order elasticity tensor C with minor and major symmetries,
/// positive definite on symmetric matrices.
class ElasticTensor {
public:
    using Array4 = std::array<std::array<std::array<std::array<double, 3>, 3>, 3>, 3>;

    /// Validates symmetries and positivity (relative tolerance 1e-10).
    explicit ElasticTensor(const Array4& c);
    /// From a 6x6 matrix in Mandel coordinates (must be symmetric, PD).
    static ElasticTensor from_mandel(const Eigen::Matrix<double, 6, 6>& m);

    double operator()(int i, int j, int k, int l) const { return c_[i][j][k][l]; }
    const Array4& components() const { return c_; }
    const Eigen::Matrix<double, 6, 6>& mandel() const { return mandel_; }

    Mat3 apply(const Mat3& f) const;
    /// Q(F) = 1/2 CF:F.
    double quad_form(const Mat3& f) const;

    /// r_C and R_C with r|F|^2 <= Q(F) <= R|F|^2 on symmetric F.
    double r_lower() const { return r_lower_; }
    double r_upper() const { return r_upper_; }

private:
    Array4 c_{};
    Eigen::Matrix<double, 6, 6> mandel_;
    double r_lower_ = 0.0;
    double r_upper_ = 0.0;
};

/// C F = 2 mu sym F + lambda (tr F) Id.
ElasticTensor make_isotropic(double lambda, double mu);

double quad_form(const ElasticTensor& c, const Mat3& f);

struct RelaxResult {
    Vec3 lambdas;
    Mat3 a_of_f;
};

/// Minimizes Q over the third row/column of the padded matrix of sym F.
RelaxResult relax(const ElasticTensor& c, const Mat2& f);

/// Cached plane-stress relaxation of C: the map A, the form Q2 and C2.
class ReducedForm {
public:
    explicit ReducedForm(const ElasticTensor& c);

    const ElasticTensor& tensor() const { return c_; }
    /// lambda = lambda_map * mandel(sym F).
    const Eigen::Matrix3d& lambda_map() const { return lambda_map_; }
    /// Q2(F) = 1/2 s^T q2_matrix s, s = mandel(sym F).
    const Eigen::Matrix3d& q2_matrix() const { return q2_; }
    /// mandel(C2 F) = c2_map * s.
    const Eigen::Matrix<double, 6, 3>& c2_map() const { return c2_; }

    RelaxResult relax(const Mat2& f) const;
    double q2(const Mat2& f) const;
    double q2(const Mandel3& s) const { return 0.5 * s.dot(q2_ * s); }
    Mat3 c2(const Mat2& f) const;

    /// Extreme eigenvalues of Q2 as a form on |sym F|^2.
    double q2_lower() const { return q2_lower_; }
    double q2_upper() const { return q2_upper_; }

private:
    ElasticTensor c_;
    Eigen::Matrix3d lambda_map_;
    Eigen::Matrix3d q2_;
    Eigen::Matrix<double, 6, 3> c2_;
    double q2_lower_ = 0.0;
    double q2_upper_ = 0.0;
};

inline double q2(const ReducedForm& r, const Mat2& f) { return r.q2(f); }
inline Mat3 c2(const ReducedForm& r, const Mat2& f) { return r.c2(f); }

}  // namespace plateplast
