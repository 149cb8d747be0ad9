#include "plateplast/tensor_core.hpp"

#include <cmath>
#include <sstream>

#include "plateplast/errors.hpp"

namespace plateplast {

namespace {

constexpr double kSqrt2 = 1.41421356237309504880;
constexpr double kSqrt6 = 2.44948974278317809820;
constexpr double kSymTol = 1e-10;

// Mandel index -> (i, j) pair.
constexpr int kMandelI[6] = {0, 1, 2, 1, 0, 0};
constexpr int kMandelJ[6] = {0, 1, 2, 2, 2, 1};

double mandel_weight(int a) { return a < 3 ? 1.0 : kSqrt2; }

}  // namespace

bool is_rotation(const Mat3& r, double tol) {
    return (r.transpose() * r - Mat3::Identity()).norm() <= tol && r.determinant() > 0.0;
}

bool is_unimodular(const Mat3& f, double tol) { return std::abs(f.determinant() - 1.0) <= tol; }

Mandel6 to_mandel(const Mat3& m) {
    Mandel6 v;
    for (int a = 0; a < 6; ++a) {
        const int i = kMandelI[a], j = kMandelJ[a];
        v[a] = a < 3 ? m(i, j) : kSqrt2 * 0.5 * (m(i, j) + m(j, i));
    }
    return v;
}

Mat3 from_mandel(const Mandel6& v) {
    Mat3 m;
    for (int a = 0; a < 6; ++a) {
        const int i = kMandelI[a], j = kMandelJ[a];
        const double x = v[a] / mandel_weight(a);
        m(i, j) = x;
        m(j, i) = x;
    }
    return m;
}

Mandel3 to_mandel(const Mat2& f) {
    return Mandel3(f(0, 0), f(1, 1), kSqrt2 * 0.5 * (f(0, 1) + f(1, 0)));
}

Mat2 from_mandel(const Mandel3& v) {
    Mat2 m;
    m << v[0], v[2] / kSqrt2, v[2] / kSqrt2, v[1];
    return m;
}

// ---------------------------------------------------------------- SymDev3

SymDev3 SymDev3::project(const Mat3& m) {
    const Mat3 s = sym(m);
    Coords c;
    for (int i = 0; i < 5; ++i) c[i] = (basis(i).array() * s.array()).sum();
    return SymDev3(c);
}

Mat3 SymDev3::basis(int i) {
    Mat3 b = Mat3::Zero();
    switch (i) {
        case 0: b(0, 0) = 1.0 / kSqrt2; b(1, 1) = -1.0 / kSqrt2; break;
        case 1: b(0, 0) = 1.0 / kSqrt6; b(1, 1) = 1.0 / kSqrt6; b(2, 2) = -2.0 / kSqrt6; break;
        case 2: b(0, 1) = b(1, 0) = 1.0 / kSqrt2; break;
        case 3: b(0, 2) = b(2, 0) = 1.0 / kSqrt2; break;
        case 4: b(1, 2) = b(2, 1) = 1.0 / kSqrt2; break;
        default: break;
    }
    return b;
}

Mat3 SymDev3::matrix() const {
    Mat3 m;
    const double d0 = c_[0] / kSqrt2 + c_[1] / kSqrt6;
    const double d1 = -c_[0] / kSqrt2 + c_[1] / kSqrt6;
    m(0, 0) = d0;
    m(1, 1) = d1;
    m(2, 2) = -(d0 + d1);
    m(0, 1) = m(1, 0) = c_[2] / kSqrt2;
    m(0, 2) = m(2, 0) = c_[3] / kSqrt2;
    m(1, 2) = m(2, 1) = c_[4] / kSqrt2;
    return m;
}

// ---------------------------------------------------------- ElasticTensor

ElasticTensor::ElasticTensor(const Array4& c) : c_(c) {
    double scale = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k)
                for (int l = 0; l < 3; ++l) scale = std::max(scale, std::abs(c[i][j][k][l]));
    if (!(scale > 0.0) || !std::isfinite(scale)) throw InvalidMaterialError("elastic tensor is zero or not finite");
    const double tol = kSymTol * scale;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k)
                for (int l = 0; l < 3; ++l) {
                    const double v = c[i][j][k][l];
                    if (std::abs(v - c[j][i][k][l]) > tol || std::abs(v - c[i][j][l][k]) > tol ||
                        std::abs(v - c[k][l][i][j]) > tol) {
                        std::ostringstream os;
                        os << "elastic tensor violates minor/major symmetry at (" << i << j << k << l << ")";
                        throw InvalidMaterialError(os.str());
                    }
                }
    for (int a = 0; a < 6; ++a)
        for (int b = 0; b < 6; ++b)
            mandel_(a, b) = mandel_weight(a) * mandel_weight(b) * c[kMandelI[a]][kMandelJ[a]][kMandelI[b]][kMandelJ[b]];
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(mandel_);
    const double lmin = es.eigenvalues().minCoeff();
    const double lmax = es.eigenvalues().maxCoeff();
    if (!(lmin > tol)) throw InvalidMaterialError("elastic tensor is not positive definite on symmetric matrices");
    r_lower_ = 0.5 * lmin;
    r_upper_ = 0.5 * lmax;
}

ElasticTensor ElasticTensor::from_mandel(const Eigen::Matrix<double, 6, 6>& m) {
    Array4 c{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k)
                for (int l = 0; l < 3; ++l) {
                    int a = -1, b = -1;
                    for (int t = 0; t < 6; ++t) {
                        if ((kMandelI[t] == i && kMandelJ[t] == j) || (kMandelI[t] == j && kMandelJ[t] == i)) a = t;
                        if ((kMandelI[t] == k && kMandelJ[t] == l) || (kMandelI[t] == l && kMandelJ[t] == k)) b = t;
                    }
                    c[i][j][k][l] = m(a, b) / (mandel_weight(a) * mandel_weight(b));
                }
    return ElasticTensor(c);
}

Mat3 ElasticTensor::apply(const Mat3& f) const {
    Mat3 out = Mat3::Zero();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k)
                for (int l = 0; l < 3; ++l) s += c_[i][j][k][l] * f(k, l);
            out(i, j) = s;
        }
    return out;
}

double ElasticTensor::quad_form(const Mat3& f) const {
    return 0.5 * (apply(f).array() * f.array()).sum();
}

ElasticTensor make_isotropic(double lambda, double mu) {
    if (!(mu > 0.0) || !std::isfinite(mu)) throw InvalidMaterialError("mu must be positive");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidMaterialError("lambda must be nonnegative");
    ElasticTensor::Array4 c{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k)
                for (int l = 0; l < 3; ++l)
                    c[i][j][k][l] = lambda * (i == j) * (k == l) + mu * ((i == k) * (j == l) + (i == l) * (j == k));
    return ElasticTensor(c);
}

double quad_form(const ElasticTensor& c, const Mat3& f) { return c.quad_form(f); }

// ------------------------------------------------------------- relaxation

RelaxResult relax(const ElasticTensor& c, const Mat2& f) {
    // Test directions spanning the third row/column.
    Mat3 dir[3];
    dir[0] = Mat3::Zero(); dir[0](0, 2) = dir[0](2, 0) = 1.0;
    dir[1] = Mat3::Zero(); dir[1](1, 2) = dir[1](2, 1) = 1.0;
    dir[2] = Mat3::Zero(); dir[2](2, 2) = 1.0;

    const Mat3 base = pad(sym(f));
    const Mat3 c_base = c.apply(base);
    Eigen::Matrix3d k;
    Vec3 rhs;
    for (int a = 0; a < 3; ++a) {
        const Mat3 cd = c.apply(dir[a]);
        for (int b = 0; b < 3; ++b) k(b, a) = (cd.array() * dir[b].array()).sum();
        rhs[a] = -(c_base.array() * dir[a].array()).sum();
    }
    Eigen::LDLT<Eigen::Matrix3d> ldlt(k);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || std::abs(k.determinant()) <= 1e-14 * std::pow(k.norm(), 3))
        throw DegenerateTensorError("relaxation system is singular");
    RelaxResult r;
    r.lambdas = ldlt.solve(rhs);
    r.a_of_f = base;
    r.a_of_f(0, 2) = r.a_of_f(2, 0) = r.lambdas[0];
    r.a_of_f(1, 2) = r.a_of_f(2, 1) = r.lambdas[1];
    r.a_of_f(2, 2) = r.lambdas[2];
    return r;
}

ReducedForm::ReducedForm(const ElasticTensor& c) : c_(c) {
    Eigen::Matrix<double, 6, 3> p;  // mandel(A(F)) = p * s
    for (int b = 0; b < 3; ++b) {
        const Mat2 fb = from_mandel(Mandel3(Mandel3::Unit(b)));
        const RelaxResult r = plateplast::relax(c, fb);
        lambda_map_.col(b) = r.lambdas;
        p.col(b) = to_mandel(r.a_of_f);
    }
    const auto& m = c.mandel();
    q2_ = p.transpose() * m * p;
    q2_ = 0.5 * (q2_ + q2_.transpose()).eval();
    c2_ = m * p;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(q2_);
    q2_lower_ = 0.5 * es.eigenvalues().minCoeff();
    q2_upper_ = 0.5 * es.eigenvalues().maxCoeff();
    if (!(q2_lower_ > 0.0)) throw DegenerateTensorError("reduced form Q2 is not positive definite");
}

RelaxResult ReducedForm::relax(const Mat2& f) const {
    RelaxResult r;
    r.lambdas = lambda_map_ * to_mandel(f);
    r.a_of_f = pad(sym(f));
    r.a_of_f(0, 2) = r.a_of_f(2, 0) = r.lambdas[0];
    r.a_of_f(1, 2) = r.a_of_f(2, 1) = r.lambdas[1];
    r.a_of_f(2, 2) = r.lambdas[2];
    return r;
}

double ReducedForm::q2(const Mat2& f) const { return q2(to_mandel(f)); }

Mat3 ReducedForm::c2(const Mat2& f) const { return from_mandel(Mandel6(c2_ * to_mandel(f))); }

}  // namespace plateplast
