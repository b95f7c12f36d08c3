#include "crisp/geometry.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

using namespace crisp;
using testutil::random_cloud;
using testutil::random_rotation;

namespace {

double sum_sq(const Pose& p, const PointCloud& x, const PointCloud& z)
{
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.cols(); ++i)
        s += (p.rotation * x.col(i) + p.translation - z.col(i)).squaredNorm();
    return s;
}

double brute_nn_mean(const PointCloud& a, const PointCloud& b, bool l1)
{
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.cols(); ++i) {
        double best = INFINITY;
        for (Eigen::Index j = 0; j < b.cols(); ++j) {
            const Vec3 d = a.col(i) - b.col(j);
            best = std::min(best, l1 ? d.lpNorm<1>() : d.norm());
        }
        s += best;
    }
    return s / static_cast<double>(a.cols());
}

} // namespace

TEST_CASE("arun fit on trivial inputs")
{
    std::mt19937_64 rng(1);
    const PointCloud x = random_cloud(rng, 20);
    const Pose id = arun_fit(x, x);
    CHECK((id.rotation - Mat3::Identity()).norm() < 1e-12);
    CHECK(id.translation.norm() < 1e-12);

    const PointCloud shifted = x.colwise() + Vec3(1, 2, 3);
    const Pose t = arun_fit(x, shifted);
    CHECK((t.rotation - Mat3::Identity()).norm() < 1e-12);
    CHECK((t.translation - Vec3(1, 2, 3)).norm() < 1e-12);
}

TEST_CASE("arun and umeyama recover planted transforms")
{
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> us(0.2, 5.0);
    for (int trial = 0; trial < 100; ++trial) {
        const PointCloud x = random_cloud(rng, 50);
        const Mat3 r = random_rotation(rng);
        const Vec3 t = random_cloud(rng, 1, 2.0).col(0);
        const Pose p = arun_fit(x, (r * x).colwise() + t);
        CHECK((p.rotation - r).norm() < 1e-9);
        CHECK((p.translation - t).norm() < 1e-9);

        const double s = us(rng);
        const SimPose q = umeyama_fit(x, ((s * r) * x).colwise() + t);
        CHECK(std::abs(q.scale - s) < 1e-9);
        CHECK((q.rotation - r).norm() < 1e-9);
        CHECK((q.translation - t).norm() < 1e-9);
    }
}

TEST_CASE("umeyama on scaled identity")
{
    std::mt19937_64 rng(3);
    const PointCloud x = random_cloud(rng, 30);
    const SimPose two = umeyama_fit(x, 2.0 * x);
    CHECK(two.scale == doctest::Approx(2.0).epsilon(1e-12));
    CHECK((two.rotation - Mat3::Identity()).norm() < 1e-12);
    CHECK(two.translation.norm() < 1e-12);
    const SimPose one = umeyama_fit(x, x);
    CHECK(one.scale == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("arun fit beats random challengers")
{
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const PointCloud x = random_cloud(rng, 30);
        const PointCloud z = random_cloud(rng, 30);
        const Pose best = arun_fit(x, z);
        const double f = sum_sq(best, x, z);
        for (int c = 0; c < 100; ++c) {
            Pose other;
            other.rotation = random_rotation(rng);
            other.translation = random_cloud(rng, 1).col(0);
            CHECK(sum_sq(other, x, z) >= f - 1e-9);
            // Small perturbations of the optimum as well.
            Pose near = exp_se3({0.01 * testutil::random_unit(rng), 0.01 * testutil::random_unit(rng)}).compose(best);
            CHECK(sum_sq(near, x, z) >= f - 1e-9);
        }
    }
}

TEST_CASE("reflection guard on planar and mirrored data")
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        PointCloud x = random_cloud(rng, 20);
        x.row(2).setZero();
        PointCloud z = x;
        z.row(0) *= -1.0; // mirror image
        z.row(1) += 0.01 * random_cloud(rng, 20).row(1);
        const Pose p = arun_fit(x, z);
        CHECK(p.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK((p.rotation.transpose() * p.rotation - Mat3::Identity()).norm() < 1e-9);
    }
}

TEST_CASE("degenerate alignment inputs")
{
    PointCloud x(3, 3);
    x << 0, 1, 2, 0, 1, 2, 0, 1, 2; // collinear
    CHECK_THROWS_AS(arun_fit(x, x), DegenerateConfiguration);
    CHECK_THROWS_AS(arun_fit(PointCloud::Zero(3, 2), PointCloud::Zero(3, 2)), DegenerateConfiguration);
    CHECK_THROWS_AS(arun_fit(PointCloud::Zero(3, 5), PointCloud::Zero(3, 4)), DegenerateConfiguration);
}

TEST_CASE("scaled solutions stay zero-residual")
{
    std::mt19937_64 rng(6);
    const PointCloud x = random_cloud(rng, 40);
    const Mat3 r = random_rotation(rng);
    const PointCloud z = ((0.7 * r) * x).colwise() + Vec3(0.1, -0.2, 0.3);
    const SimPose fit = umeyama_fit(x, z);
    CHECK(alignment_residual(fit, x, z) < 1e-9);
    for (double b : {0.5, 2.0, 10.0}) {
        SimPose scaled = fit;
        scaled.scale *= b;
        scaled.translation *= b;
        CHECK(alignment_residual(scaled, x, b * z) < 1e-9);
    }
}

TEST_CASE("so3 and se3 exponential maps")
{
    CHECK((exp_so3(Vec3::Zero()) - Mat3::Identity()).norm() == 0.0);
    const Pose id = exp_se3({});
    CHECK((id.rotation - Mat3::Identity()).norm() == 0.0);
    CHECK(id.translation.norm() == 0.0);

    Mat3 rz;
    rz << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    CHECK((exp_so3(Vec3(0, 0, std::numbers::pi / 2)) - rz).norm() < 1e-15);

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> angle(1e-6, std::numbers::pi - 1e-3);
    for (int i = 0; i < 500; ++i) {
        const Twist xi{angle(rng) * testutil::random_unit(rng), random_cloud(rng, 1, 2.0).col(0)};
        const Twist back = log_se3(exp_se3(xi));
        CHECK((back.omega - xi.omega).norm() < 1e-8);
        CHECK((back.v - xi.v).norm() < 1e-8);
        // Rodrigues through Eigen's angle-axis as an independent oracle.
        const Mat3 aa = Eigen::AngleAxisd(xi.omega.norm(), xi.omega.normalized()).toRotationMatrix();
        CHECK((exp_so3(xi.omega) - aa).norm() < 1e-12);
    }
    CHECK(log_so3(Mat3::Identity()).norm() == 0.0);
    // Half turn: the axis is still recovered up to sign.
    const Vec3 half = log_so3(exp_so3(Vec3(0, std::numbers::pi, 0)));
    CHECK(std::abs(half.norm() - std::numbers::pi) < 1e-9);
    CHECK(std::abs(std::abs(half.y()) - std::numbers::pi) < 1e-9);
}

TEST_CASE("pose composition and inverse")
{
    std::mt19937_64 rng(8);
    const PointCloud x = random_cloud(rng, 10);
    Pose a{random_rotation(rng), Vec3(1, 2, 3)};
    Pose b{random_rotation(rng), Vec3(-1, 0, 2)};
    const PointCloud ab = a.compose(b).apply(x);
    CHECK((ab - a.apply(b.apply(x))).norm() < 1e-12);
    CHECK((a.inverse().apply(a.apply(x)) - x).norm() < 1e-12);

    Pose chain;
    const Pose step = exp_se3({Vec3(0.01, 0.02, -0.015), Vec3(0.001, 0, 0)});
    for (int i = 0; i < 1000; ++i)
        chain = step.compose(chain);
    CHECK(chain.chain <= Pose::kMaxChain);
    CHECK((chain.rotation.transpose() * chain.rotation - Mat3::Identity()).norm() < 1e-12);
    CHECK(chain.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("add-s metric")
{
    std::mt19937_64 rng(9);
    const PointCloud m = random_cloud(rng, 100);
    const Pose p{random_rotation(rng), Vec3(0.1, 0.2, 0.3)};
    CHECK(adds_metric(p, p, m) == doctest::Approx(0.0));

    PointCloud one(3, 1);
    one << 0.3, -0.1, 0.2;
    Pose shifted = p;
    shifted.translation += Vec3(0.03, 0.04, 0.0);
    CHECK(adds_metric(shifted, p, one) == doctest::Approx(0.05).epsilon(1e-12));

    // Sphere point set turned half way round about its center.
    const PointCloud sphere = [&] {
        PointCloud s(3, 2000);
        for (Eigen::Index i = 0; i < s.cols(); ++i)
            s.col(i) = testutil::random_unit(rng);
        return s;
    }();
    const Pose half{exp_so3(Vec3(0, 0, std::numbers::pi)), Vec3::Zero()};
    const double adds = adds_metric(half, Pose::identity(), sphere);
    CHECK(adds < 0.1);
    CHECK(adds == doctest::Approx(brute_nn_mean(half.apply(sphere), sphere, false)).epsilon(1e-12));
}

TEST_CASE("add-s hashed path agrees with exhaustive search")
{
    std::mt19937_64 rng(10);
    const PointCloud m = random_cloud(rng, kAddsExhaustiveLimit + 500, 0.3);
    const Pose gt{random_rotation(rng), Vec3(0.2, 0, 0)};
    const Pose est = exp_se3({Vec3(0.05, 0, 0.02), Vec3(0.01, 0.0, 0.0)}).compose(gt);
    const PointCloud a = est.apply(m), b = gt.apply(m);
    const Eigen::VectorXd hashed = hashed_nearest_distances(a, b);
    const Eigen::VectorXd exact = kernels::serial::nearest_distances(a, b, Norm::L2);
    CHECK((hashed - exact).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(adds_metric(est, gt, m) == doctest::Approx(exact.mean()).epsilon(1e-12));
}

TEST_CASE("chamfer distance")
{
    std::mt19937_64 rng(11);
    const PointCloud a = random_cloud(rng, 150);
    const PointCloud b = random_cloud(rng, 90);
    CHECK(chamfer(a, a, Norm::L2) == 0.0);
    PointCloud p(3, 1), q(3, 1);
    p << 0, 0, 0;
    q << 0.3, 0.4, 0;
    CHECK(chamfer(p, q, Norm::L2) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(chamfer(p, q, Norm::L1) == doctest::Approx(0.7).epsilon(1e-15));
    for (Norm n : {Norm::L1, Norm::L2}) {
        const bool l1 = n == Norm::L1;
        const double oracle = 0.5 * (brute_nn_mean(a, b, l1) + brute_nn_mean(b, a, l1));
        CHECK(std::abs(chamfer(a, b, n) - oracle) < 1e-12);
        CHECK(chamfer(a, b, n) == chamfer(b, a, n));
    }
}

TEST_CASE("rotation error in degrees")
{
    const Mat3 r = exp_so3(Vec3(0, 0, std::numbers::pi / 6));
    CHECK(rotation_error_deg(r, Mat3::Identity()) == doctest::Approx(30.0).epsilon(1e-12));
    CHECK(rotation_error_deg(r, r) == doctest::Approx(0.0));
}

TEST_CASE("point cloud csv round trip")
{
    std::mt19937_64 rng(12);
    const PointCloud c = random_cloud(rng, 25);
    const auto path = std::filesystem::temp_directory_path() / "crisp_test_cloud.csv";
    write_cloud_csv(path, c);
    std::ifstream is(path);
    std::string header;
    std::getline(is, header);
    CHECK(header.rfind("x,y,z", 0) == 0);
    is.close();
    CHECK(read_cloud_csv(path) == c);
    std::filesystem::remove(path);
}
