#include <gtest/gtest.h>

#include <random>

#include "plateplast/errors.hpp"
#include "plateplast/tensor_core.hpp"

using namespace plateplast;

namespace {

Mat3 e(int i, int j) {
    Mat3 m = Mat3::Zero();
    m(i, j) = 1.0;
    return m;
}

// Closed isotropic plane-stress form.
double q2_closed(double lambda, double mu, const Mat2& f) {
    const Mat2 s = 0.5 * (f + f.transpose());
    const double tr = s.trace();
    return mu * s.squaredNorm() + mu * lambda / (lambda + 2 * mu) * tr * tr;
}

// Minimizes Q over the third row/column by polarization: the Hessian and
// gradient of the quadratic in (l1, l2, l3) come from quad_form samples only.
Vec3 relax_by_polarization(const ElasticTensor& c, const Mat2& f) {
    const Mat3 base = pad(0.5 * (f + f.transpose()));
    Mat3 d[3] = {e(0, 2) + e(2, 0), e(1, 2) + e(2, 1), e(2, 2)};
    Eigen::Matrix3d h;
    Vec3 g;
    for (int a = 0; a < 3; ++a) {
        g[a] = c.quad_form(base + d[a]) - c.quad_form(base - d[a]);
        g[a] *= 0.5;
        for (int b = 0; b < 3; ++b)
            h(a, b) = c.quad_form(d[a] + d[b]) - c.quad_form(d[a]) - c.quad_form(d[b]);
    }
    return h.ldlt().solve(-g);
}

}  // namespace

TEST(Isotropic, ApplyIdentity) {
    const auto c = make_isotropic(1, 1);
    EXPECT_TRUE(c.apply(Mat3::Identity()).isApprox(5.0 * Mat3::Identity(), 1e-14));
}

TEST(Isotropic, SkewIsAnnihilated) {
    const auto c = make_isotropic(0, 1);
    const Mat3 w = e(0, 1) - e(1, 0);
    EXPECT_LT(c.apply(w).norm(), 1e-15);
    EXPECT_EQ(make_isotropic(1, 1).quad_form(w), 0.0);
}

TEST(Isotropic, ApplySimpleShear) {
    const Mat3 r = make_isotropic(1, 1).apply(e(0, 1));
    EXPECT_TRUE(r.isApprox(e(0, 1) + e(1, 0), 1e-15));
}

TEST(Isotropic, QuadFormIdentity) { EXPECT_DOUBLE_EQ(make_isotropic(1, 1).quad_form(Mat3::Identity()), 7.5); }

TEST(Isotropic, Bounds) {
    const auto c = make_isotropic(2, 0.5);
    // Mandel eigenvalues are 2 mu (five times) and 2 mu + 3 lambda.
    EXPECT_NEAR(c.r_lower(), 0.5, 1e-13);
    EXPECT_NEAR(c.r_upper(), 0.5 + 3.0, 1e-13);
}

TEST(ElasticTensor, RejectsInvalidInput) {
    EXPECT_THROW(make_isotropic(1, 0), InvalidMaterialError);
    EXPECT_THROW(make_isotropic(-1, 1), InvalidMaterialError);
    auto arr = make_isotropic(1, 1).components();
    arr[0][1][2][2] += 0.3;
    EXPECT_THROW(ElasticTensor{arr}, InvalidMaterialError);
    Eigen::Matrix<double, 6, 6> m = Eigen::Matrix<double, 6, 6>::Identity();
    m(5, 5) = -1.0;
    EXPECT_THROW(ElasticTensor::from_mandel(m), InvalidMaterialError);
}

TEST(ElasticTensor, MandelRoundTrip) {
    const auto c = make_isotropic(0.7, 1.3);
    const auto d = ElasticTensor::from_mandel(c.mandel());
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k)
                for (int l = 0; l < 3; ++l) EXPECT_NEAR(c(i, j, k, l), d(i, j, k, l), 1e-14);
}

TEST(Relax, ZeroInput) {
    const auto r = relax(make_isotropic(2, 0.5), Mat2::Zero());
    EXPECT_EQ(r.lambdas.norm(), 0.0);
    EXPECT_EQ(r.a_of_f.norm(), 0.0);
}

TEST(Relax, IdentityIsotropic) {
    const auto r = relax(make_isotropic(1, 1), Mat2::Identity());
    EXPECT_NEAR(r.lambdas[0], 0.0, 1e-15);
    EXPECT_NEAR(r.lambdas[1], 0.0, 1e-15);
    EXPECT_NEAR(r.lambdas[2], -2.0 / 3.0, 1e-15);
}

TEST(Relax, ShearDecouples) {
    Mat2 f = Mat2::Zero();
    f(0, 1) = 1.0;
    EXPECT_LT(relax(make_isotropic(1, 1), f).lambdas.norm(), 1e-15);
}

TEST(Relax, MatchesPolarizationOracle) {
    std::mt19937 rng(7);
    std::normal_distribution<double> n01;
    Eigen::Matrix<double, 6, 6> a;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) a(i, j) = n01(rng);
    const auto c = ElasticTensor::from_mandel(a * a.transpose() + 0.5 * Eigen::Matrix<double, 6, 6>::Identity());
    const ReducedForm rf(c);
    for (int t = 0; t < 50; ++t) {
        Mat2 f;
        f << n01(rng), n01(rng), n01(rng), n01(rng);
        const Vec3 oracle = relax_by_polarization(c, f);
        EXPECT_LT((relax(c, f).lambdas - oracle).norm(), 1e-10 * (1 + oracle.norm()));
        EXPECT_LT((rf.relax(f).lambdas - oracle).norm(), 1e-10 * (1 + oracle.norm()));
        // Q2 is the relaxed value of Q.
        EXPECT_NEAR(rf.q2(f), c.quad_form(relax(c, f).a_of_f), 1e-10 * (1 + rf.q2(f)));
    }
}

TEST(Q2, ClosedFormExamples) {
    const ReducedForm rf(make_isotropic(1, 1));
    EXPECT_EQ(rf.q2(Mat2(Mat2::Zero())), 0.0);
    EXPECT_NEAR(rf.q2(Mat2(Mat2::Identity())), 10.0 / 3.0, 1e-14);
    Mat2 f = Mat2::Zero();
    f(0, 1) = 1.0;
    EXPECT_NEAR(rf.q2(f), 0.5, 1e-15);
}

TEST(Q2, ClosedFormRandom) {
    std::mt19937 rng(11);
    std::normal_distribution<double> n01;
    for (auto [lambda, mu] : {std::pair{1.0, 1.0}, std::pair{2.0, 0.5}, std::pair{0.0, 1.0}}) {
        const ReducedForm rf(make_isotropic(lambda, mu));
        for (int t = 0; t < 200; ++t) {
            Mat2 f;
            f << n01(rng), n01(rng), n01(rng), n01(rng);
            const double ref = q2_closed(lambda, mu, f);
            EXPECT_NEAR(rf.q2(f), ref, 1e-12 * (1 + ref));
        }
    }
}

TEST(C2, IdentityIsotropic) {
    const Mat3 s = c2(ReducedForm(make_isotropic(1, 1)), Mat2::Identity());
    EXPECT_NEAR(s(0, 0), 10.0 / 3.0, 1e-14);
    for (int i = 0; i < 3; ++i) {
        EXPECT_NEAR(s(2, i), 0.0, 1e-14);
        EXPECT_NEAR(s(i, 2), 0.0, 1e-14);
    }
}

TEST(C2, OnlyInPlaneComponentsMatter) {
    std::mt19937 rng(3);
    std::normal_distribution<double> n01;
    const ReducedForm rf(make_isotropic(0.4, 1.7));
    for (int t = 0; t < 50; ++t) {
        Mat2 f;
        f << n01(rng), n01(rng), n01(rng), n01(rng);
        Mat3 g;
        for (int i = 0; i < 9; ++i) g(i) = n01(rng);
        const Mat3 s = rf.c2(f);
        const double full = (s.array() * g.array()).sum();
        const double planar = (s.array() * pad(sym(minor2(g))).array()).sum();
        EXPECT_NEAR(full, planar, 1e-12 * (1 + std::abs(full)));
    }
}

TEST(SymDev3, ExactTraceAndNorm) {
    std::mt19937 rng(5);
    std::normal_distribution<double> n01;
    for (int t = 0; t < 100; ++t) {
        const SymDev3 p(n01(rng), n01(rng), n01(rng), n01(rng), n01(rng));
        const Mat3 m = p.matrix();
        EXPECT_EQ((m(0, 0) + m(1, 1)) + m(2, 2), 0.0);
        EXPECT_EQ((m - m.transpose()).norm(), 0.0);
        EXPECT_NEAR(m.norm(), p.norm(), 1e-14 * (1 + p.norm()));
        EXPECT_LT((SymDev3::project(m).coords() - p.coords()).norm(), 1e-14 * (1 + p.norm()));
    }
}

TEST(SymDev3, ProjectionRemovesTraceAndSkew) {
    Mat3 a;
    a << 1, 2, 3, 4, 5, 6, 7, 8, 10;
    const Mat3 dev = sym(a) - sym(a).trace() / 3.0 * Mat3::Identity();
    EXPECT_LT((SymDev3::project(a).matrix() - dev).norm(), 1e-14);
}

TEST(Mandel, RoundTrip) {
    Mat3 a;
    a << 1, 2, 3, 2, 5, 6, 3, 6, 9;
    EXPECT_LT((from_mandel(to_mandel(a)) - a).norm(), 1e-15);
    EXPECT_NEAR(to_mandel(a).squaredNorm(), a.squaredNorm(), 1e-12);
}
