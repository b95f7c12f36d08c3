#include "crisp/certification.hpp"
#include "crisp/simulator.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

using namespace crisp;

namespace {

Eigen::MatrixXd random_psd(std::mt19937_64& rng, int k)
{
    std::normal_distribution<double> g;
    Eigen::MatrixXd a(k + 2, k);
    for (Eigen::Index i = 0; i < a.size(); ++i)
        a.data()[i] = g(rng);
    return a.transpose() * a;
}

// Real roots of the characteristic polynomial, ascending.
std::vector<double> char_roots(const Eigen::MatrixXd& m)
{
    const auto k = m.rows();
    if (k == 1)
        return {m(0, 0)};
    if (k == 2) {
        const double tr = m.trace(), det = m.determinant();
        const double disc = std::sqrt(std::max(0.0, tr * tr / 4 - det));
        return {tr / 2 - disc, tr / 2 + disc};
    }
    // Trigonometric solution of the symmetric cubic.
    const double q = m.trace() / 3.0;
    const Eigen::MatrixXd b = m - q * Eigen::MatrixXd::Identity(3, 3);
    const double p = std::sqrt((b * b).trace() / 6.0);
    const double r = std::clamp((b / p).determinant() / 2.0, -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;
    std::vector<double> out = {q + 2 * p * std::cos(phi), q + 2 * p * std::cos(phi + 2 * std::numbers::pi / 3),
                               q + 2 * p * std::cos(phi + 4 * std::numbers::pi / 3)};
    std::sort(out.begin(), out.end());
    return out;
}

PointCloud noisy(PointCloud pts, std::mt19937_64& rng, double sigma)
{
    std::normal_distribution<double> g(0.0, sigma);
    for (Eigen::Index i = 0; i < pts.size(); ++i)
        pts.data()[i] += g(rng);
    return pts;
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

} // namespace

TEST_CASE("jacobi eigenvalues against characteristic polynomial roots")
{
    std::mt19937_64 rng(1);
    for (int k = 1; k <= 3; ++k)
        for (int trial = 0; trial < 50; ++trial) {
            const Eigen::MatrixXd m = random_psd(rng, k);
            const SymmetricEigen e = jacobi_eigen(m);
            const auto roots = char_roots(m);
            for (int i = 0; i < k; ++i)
                CHECK(std::abs(e.values[i] - roots[static_cast<std::size_t>(i)]) < 1e-8);
        }
}

TEST_CASE("jacobi decomposition reconstructs the matrix")
{
    std::mt19937_64 rng(2);
    for (int k = 1; k <= 10; ++k)
        for (int trial = 0; trial < 20; ++trial) {
            const Eigen::MatrixXd m = random_psd(rng, k);
            const SymmetricEigen e = jacobi_eigen(m);
            CHECK((e.vectors * e.values.asDiagonal() * e.vectors.transpose() - m).norm() < 1e-8 * (1 + m.norm()));
            CHECK((e.vectors.transpose() * e.vectors - Eigen::MatrixXd::Identity(k, k)).norm() < 1e-12);
            for (int i = 1; i < k; ++i)
                CHECK(e.values[i - 1] <= e.values[i]);
            CHECK(e.values.minCoeff() >= -1e-9);
        }
    const SymmetricEigen d = jacobi_eigen(Eigen::Vector3d(3, 1, 2).asDiagonal().toDenseMatrix());
    CHECK(d.values == Eigen::Vector3d(1, 2, 3));
    CHECK(d.sweeps <= 1);
}

TEST_CASE("nearest-rank quantile and the oc verdict")
{
    const CertificateConfig cfg{1e-2, 0.98};
    Eigen::VectorXd r(100);
    r.setConstant(1e-3);
    r.tail(3).setConstant(1.0);
    CHECK(nearest_rank_quantile(r, 0.98) == 1.0);
    CHECK_FALSE(oc_from_residuals(r, cfg));

    r.setConstant(1e-3);
    r[37] = 1.0;
    CHECK(nearest_rank_quantile(r, 0.98) == 1e-3);
    CHECK(oc_from_residuals(r, cfg));

    CHECK(oc_from_residuals(Eigen::VectorXd::Zero(10), {1e-9, 1.0}));
    CHECK(nearest_rank_quantile(Eigen::Vector3d(3, 1, 2), 1.0) == 3.0);
    CHECK(nearest_rank_quantile(Eigen::Vector3d(3, 1, 2), 0.34) == 2.0);
    CHECK(nearest_rank_quantile(Eigen::Vector3d(3, 1, 2), 1.0 / 3.0) == 1.0);
    // Strictly below epsilon.
    CHECK_FALSE(oc_from_residuals(Eigen::VectorXd::Constant(5, 0.01), cfg));
}

TEST_CASE("oc is monotone in epsilon and antitone in p")
{
    std::mt19937_64 rng(3);
    std::exponential_distribution<double> ex(100.0);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
        Eigen::VectorXd r(1 + trial % 60);
        for (Eigen::Index i = 0; i < r.size(); ++i)
            r[i] = ex(rng);
        const double eps = 0.02 * u(rng), p = u(rng);
        if (oc_from_residuals(r, {eps, p})) {
            CHECK(oc_from_residuals(r, {eps * (1 + u(rng)), p}));
            CHECK(oc_from_residuals(r, {eps, p * u(rng)}));
        }
        // Independent sort-based quantile.
        std::vector<double> s(r.data(), r.data() + r.size());
        std::sort(s.begin(), s.end());
        const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(s.size())));
        CHECK(nearest_rank_quantile(r, p) == s[std::max<std::size_t>(rank, 1) - 1]);
    }
}

TEST_CASE("certificate residuals are decoded magnitudes")
{
    const LinearBlend dec(asymmetric_basis(3));
    const LatentCode code{Eigen::Vector3d(0.2, 0.5, 0.3)};
    std::mt19937_64 rng(4);
    const PointCloud z = testutil::random_cloud(rng, 50, 0.3);
    const Eigen::VectorXd r = certificate_residuals(z, code, dec);
    for (Eigen::Index i = 0; i < z.cols(); ++i)
        CHECK(r[i] == std::abs(dec.eval(code, z.col(i))));
    const PointCloud on = sample_surface(*dec.decode(code), 100, 4);
    CHECK(oc_certificate(on, code, dec, {}));
    CHECK_FALSE(oc_certificate(PointCloud(1.5 * on), code, dec, {}));
}

TEST_CASE("certificate configuration")
{
    CHECK_NOTHROW(CertificateConfig{}.validate());
    CHECK_THROWS_AS((CertificateConfig{0.0, 0.9}.validate()), Error);
    CHECK_THROWS_AS((CertificateConfig{0.01, 0.0}.validate()), Error);
    CHECK_THROWS_AS((CertificateConfig{0.01, 1.1}.validate()), Error);
    CHECK_NOTHROW((CertificateConfig{0.01, 1.0}.validate()));
}

TEST_CASE("degeneracy report on constructed matrices")
{
    std::mt19937_64 rng(5);
    Eigen::MatrixXd f = Eigen::MatrixXd::Random(30, 4);
    f.col(2).setZero();
    const DegeneracyReport zero = degeneracy_report(f);
    CHECK(std::abs(zero.lambda_min) < 1e-12);
    CHECK(zero.is_degenerate);
    CHECK(std::isinf(zero.gram_condition));

    const DegeneracyReport id = degeneracy_report(Eigen::MatrixXd::Identity(4, 4));
    CHECK(id.lambda_min == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(id.gram_condition == doctest::Approx(1.0).epsilon(1e-14));
    CHECK_FALSE(id.is_degenerate);
    CHECK(id.threshold == doctest::Approx(1e-6));

    CHECK(degeneracy_report(Eigen::MatrixXd::Identity(3, 3), 2.0).is_degenerate);
}

TEST_CASE("appending rows never lowers the smallest eigenvalue")
{
    std::mt19937_64 rng(6);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 2 + trial % 5;
        Eigen::MatrixXd f(0, k);
        double prev = 0.0;
        for (int step = 0; step < 12; ++step) {
            Eigen::MatrixXd rows(1 + step % 3, k);
            for (Eigen::Index i = 0; i < rows.size(); ++i)
                rows.data()[i] = g(rng);
            Eigen::MatrixXd grown(f.rows() + rows.rows(), k);
            grown << f, rows;
            f = grown;
            const double now = degeneracy_report(f).lambda_min;
            CHECK(now >= prev - 1e-12 * (1 + f.squaredNorm()));
            prev = now;
        }
    }
}

TEST_CASE("sphere versus bumped sphere")
{
    const LinearBlend dec(sphere_bump_basis());
    const LatentCode gt = LatentCode::vertex(1, 2);
    std::mt19937_64 rng(7);
    const PointCloud surface = sample_surface(*dec.decode(gt), 4000, 7);
    std::vector<Vec3> low, high;
    for (Eigen::Index i = 0; i < surface.cols(); ++i) {
        if (surface(2, i) < 0.0)
            low.push_back(surface.col(i));
        else if (surface(2, i) > kBumpSphereRadius)
            high.push_back(surface.col(i));
    }
    REQUIRE(high.size() > 20);
    const PointCloud sym = noisy(to_cloud(low), rng, 1e-3);
    const PointCloud bump = noisy(to_cloud(high), rng, 1e-3);

    const auto basis_block = [&](const PointCloud& z) -> Eigen::MatrixXd {
        return build_F_matrix(z, dec, gt).rightCols(2);
    };
    const DegeneracyReport before = degeneracy_report(basis_block(sym));
    Eigen::MatrixXd both(sym.cols() + bump.cols(), 2);
    both << basis_block(sym), basis_block(bump);
    const DegeneracyReport after = degeneracy_report(both);
    CHECK(before.lambda_min < 1e-6);
    CHECK(before.is_degenerate);
    CHECK(after.lambda_min >= 10.0 * std::max(before.lambda_min, 1e-300));
    CHECK(after.lambda_min > 1e-6);
    MESSAGE("lambda_min " << before.lambda_min << " -> " << after.lambda_min);
}

TEST_CASE("certified corrections have lower chamfer error")
{
    const LinearBlend dec(asymmetric_basis(4));
    SceneConfig sc;
    sc.noise_sigma = 1e-3;
    sc.seed = 8;
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> all, certified;
    for (int i = 0; i < 30; ++i) {
        const Scene scene = make_scene(dec, sc, i);
        const double q = u(rng);
        PerturbationModel pm;
        pm.rotation_deg = 60.0 * q;
        pm.translation_m = 0.2 * q;
        pm.code_perturb = 0.6 * q;
        pm.z_noise_sigma = 1e-3;
        pm.seed = 100 + static_cast<std::uint64_t>(i);
        const SceneEstimate est = synth_scene_estimates(scene, pm);
        const CorrectionResult r = bcd_correct(make_buffer(scene, est.z), est.alpha, dec, {});
        const double c = evaluate(r, scene, dec).chamfer_l2;
        all.push_back(c);
        if (oc_certificate(r.z_hat_stacked(), r.code_hat, dec, {}))
            certified.push_back(c);
    }
    REQUIRE(!certified.empty());
    REQUIRE(certified.size() < all.size());
    CHECK(median(certified) <= median(all));
}
