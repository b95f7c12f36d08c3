#include "crisp/selftrain.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>

using namespace crisp;

namespace {

std::vector<Scene> scenes_for(const Decoder& dec, int count, double noise, std::uint64_t seed)
{
    SceneConfig sc;
    sc.noise_sigma = noise;
    sc.seed = seed;
    std::vector<Scene> out;
    for (int i = 0; i < count; ++i)
        out.push_back(make_scene(dec, sc, i));
    return out;
}

BiasedOracleEstimator zero_bias(Eigen::Index dim)
{
    return {Pose{}, Eigen::VectorXd::Zero(dim)};
}

// Records what reaches update().
class SpyEstimator final : public Estimator {
public:
    explicit SpyEstimator(BiasedOracleEstimator inner) : inner_(std::move(inner)) {}
    [[nodiscard]] Prediction predict(const Frame& frame) const override { return inner_.predict(frame); }
    UpdateStats update(const std::vector<PseudoLabel>& labels, const std::vector<const Frame*>& frames,
                       const LearningRates& lr) override
    {
        seen.insert(seen.end(), labels.begin(), labels.end());
        return inner_.update(labels, frames, lr);
    }
    std::vector<PseudoLabel> seen;

private:
    BiasedOracleEstimator inner_;
};

Frame toy_frame()
{
    Frame f;
    f.gt_z = (PointCloud(3, 2) << 0.1, -0.1, 0.0, 0.2, 0.05, 0.0).finished();
    f.x = f.gt_z;
    f.gt_alpha = LatentCode{Eigen::Vector2d(0.5, 0.5)};
    return f;
}

} // namespace

TEST_CASE("zero-bias estimator on noiseless scenes")
{
    const LinearBlend dec(asymmetric_basis(4));
    const auto scenes = scenes_for(dec, 6, 0.0, 1);
    const BiasedOracleEstimator est = zero_bias(4);
    for (SolverKind solver : {SolverKind::Bcd, SolverKind::Lsq}) {
        LabelingConfig cfg;
        cfg.solver = solver;
        const LabelBatch batch = generate_pseudo_labels(scenes, est, dec, cfg);
        CHECK(batch.certified_fraction() == 1.0);
        REQUIRE(batch.labels.size() == scenes.size());
        for (const auto& l : batch.labels) {
            const Frame& f = scenes[static_cast<std::size_t>(l.object_id)].frames[static_cast<std::size_t>(l.view_id)];
            CHECK((l.z_hat - f.gt_z).colwise().norm().maxCoeff() < 1e-6);
            CHECK((l.code_hat.alpha - f.gt_alpha.alpha).norm() < 1e-6);
            CHECK(l.certified);
        }
    }
}

TEST_CASE("a 90 degree pose bias is never certified unless corrected")
{
    const LinearBlend dec(asymmetric_basis(4));
    const auto scenes = scenes_for(dec, 8, 0.0, 2);
    const auto est = BiasedOracleEstimator::random(4, 90.0, 0.0, 0.0, 2);
    LabelingConfig raw;
    raw.use_corrector = false;
    const LabelBatch uncorrected_batch = generate_pseudo_labels(scenes, est, dec, raw);
    CHECK(uncorrected_batch.certified_fraction() == 0.0);
    CHECK(uncorrected_batch.labels.empty());

    // The corrector sometimes escapes; whatever it certifies must be right.
    const LabelBatch batch = generate_pseudo_labels(scenes, est, dec, {});
    for (const auto& o : batch.outcomes) {
        const MetricsRecord m = evaluate(o.result, scenes[static_cast<std::size_t>(o.object_id)], dec);
        if (o.certified)
            CHECK(m.rotation_error_deg < 5.0);
        else
            CHECK(m.rotation_error_deg > 5.0);
    }
}

TEST_CASE("correction raises the certified fraction")
{
    const LinearBlend dec(asymmetric_basis(4));
    const auto scenes = scenes_for(dec, 20, 1e-3, 3);
    const auto est = BiasedOracleEstimator::random(4, 8.0, 0.2, 1e-3, 3);
    LabelingConfig with, without;
    without.use_corrector = false;
    const double a = generate_pseudo_labels(scenes, est, dec, with).certified_fraction();
    const double b = generate_pseudo_labels(scenes, est, dec, without).certified_fraction();
    MESSAGE("certified with corrector " << a << ", without " << b);
    CHECK(a >= b);
    CHECK(a > 0.0);
}

TEST_CASE("training on its own predictions leaves the estimator unchanged")
{
    std::mt19937_64 rng(4);
    const LinearBlend dec(asymmetric_basis(3));
    const auto scenes = scenes_for(dec, 4, 1e-3, 4);
    auto est = BiasedOracleEstimator::random(3, 5.0, 0.1, 0.0, 4);
    std::vector<PseudoLabel> labels;
    std::vector<const Frame*> frames;
    for (const auto& s : scenes)
        for (const auto& f : s.frames) {
            const Prediction p = est.predict(f);
            labels.push_back({f.object_id, f.view_id, p.z, p.code, true});
            frames.push_back(&f);
        }
    const Pose pose = est.pose_bias();
    const Eigen::VectorXd code = est.code_bias();
    const UpdateStats u = est.update(labels, frames, {0.5, 0.2});
    CHECK(u.mean_lz == 0.0);
    CHECK(u.mean_lh == 0.0);
    CHECK((est.pose_bias().rotation - pose.rotation).norm() < 1e-8);
    CHECK((est.pose_bias().translation - pose.translation).norm() < 1e-8);
    CHECK((est.code_bias() - code).norm() < 1e-8);

    // A noiseless unbiased estimator is already converged.
    auto exact = zero_bias(3);
    const EpochStats st = self_train_epoch(exact, scenes_for(dec, 4, 0.0, 5), dec, {}, {0.5, 0.2}, 0);
    CHECK(st.certified_fraction == 1.0);
    CHECK(exact.bias_norm() < 1e-8);
}

TEST_CASE("losses on a two-point frame")
{
    const Frame f = toy_frame();
    Pose shift;
    shift.translation = Vec3(0.1, 0.0, 0.0);
    BiasedOracleEstimator est(shift, Eigen::Vector2d(0.1, -0.1));
    const PseudoLabel label{0, 0, f.gt_z, f.gt_alpha, true};
    const auto lg = est.loss_gradient(label, f);
    CHECK(lg.lz == doctest::Approx(2 * 0.01).epsilon(1e-12));
    CHECK(lg.lh == doctest::Approx(0.01 + 0.01).epsilon(1e-12));
    CHECK(lg.grad_code.isApprox(Eigen::Vector2d(0.2, -0.2), 1e-12));
    CHECK(lg.grad_pose.tail<3>().isApprox(Vec3(0.2, 0, 0), 1e-12));

    const UpdateStats u = est.update({label, label}, {&f, &f}, {0.0, 0.0});
    CHECK(u.mean_lz == doctest::Approx(0.02).epsilon(1e-12));
    CHECK(u.mean_lh == doctest::Approx(0.02).epsilon(1e-12));
    CHECK(est.code_bias() == Eigen::Vector2d(0.1, -0.1));
}

TEST_CASE("estimator loss gradient against finite differences")
{
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const int k = 4;
    for (int trial = 0; trial < 100; ++trial) {
        Frame f;
        f.gt_z = testutil::random_cloud(rng, 30, 0.2);
        f.x = f.gt_z;
        f.gt_alpha = LatentCode{0.7 * testutil::random_simplex(rng, k) + 0.3 * Eigen::VectorXd::Constant(k, 0.25)};
        Eigen::VectorXd b(k);
        for (int i = 0; i < k; ++i)
            b[i] = 0.05 * u(rng);
        b.array() -= b.mean();
        Pose bias;
        bias.rotation = testutil::random_rotation(rng);
        bias.translation = testutil::random_cloud(rng, 1, 0.05).col(0);
        const BiasedOracleEstimator est(bias, b);
        PseudoLabel label{0, 0, testutil::random_cloud(rng, 30, 0.2), LatentCode{testutil::random_simplex(rng, k)}};
        const auto lg = est.loss_gradient(label, f);
        const double n = 30.0;

        const double h = 1e-6;
        kernels::Vec6 num_pose;
        for (int j = 0; j < 6; ++j) {
            kernels::Vec6 e = kernels::Vec6::Zero();
            e[j] = h;
            const auto at = [&](double sgn) {
                const Pose p = exp_se3(Twist::from_vector(sgn * e)).compose(bias);
                return BiasedOracleEstimator(p, b).loss_gradient(label, f).lz / n;
            };
            num_pose[j] = (at(1.0) - at(-1.0)) / (2 * h);
        }
        CHECK(testutil::rel_err(lg.grad_pose, num_pose) < 1e-4);

        Eigen::VectorXd num_code(k);
        for (int j = 0; j < k; ++j) {
            Eigen::VectorXd bp = b, bm = b;
            bp[j] += h;
            bm[j] -= h;
            num_code[j] = (BiasedOracleEstimator(bias, bp).loss_gradient(label, f).lh -
                           BiasedOracleEstimator(bias, bm).loss_gradient(label, f).lh) /
                          (2 * h);
        }
        CHECK(testutil::rel_err(lg.grad_code, num_code) < 1e-4);
    }
}

TEST_CASE("soft-L1 loss examples")
{
    const PointCloud zero = PointCloud::Zero(3, 1);
    CHECK(loss_pnc_soft_l1(zero, zero) == 0.0);
    CHECK(loss_pnc_soft_l1(Vec3(0.05, 0, 0), zero) == doctest::Approx(0.0125).epsilon(1e-14));
    CHECK(loss_pnc_soft_l1(Vec3(0, 0.5, 0), zero) == doctest::Approx(0.45).epsilon(1e-14));
    PointCloud two(3, 2);
    two << 0.05, 0.0, 0.0, 0.5, 0.0, 0.0;
    CHECK(loss_pnc_soft_l1(two, PointCloud::Zero(3, 2)) == doctest::Approx((0.0125 + 0.45) / 2).epsilon(1e-14));
    // Continuous at zeta.
    CHECK(loss_pnc_soft_l1(Vec3(0.1, 0, 0), zero) == doctest::Approx(0.05).epsilon(1e-14));
    CHECK_THROWS_AS(loss_pnc_soft_l1(two, zero), Error);
    CHECK_THROWS_AS(loss_pnc_soft_l1(zero, zero, 0.0), Error);
}

TEST_CASE("soft-L1 gradient against finite differences")
{
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const PointCloud zs = testutil::random_cloud(rng, 8, 0.2);
        PointCloud z = zs + testutil::random_cloud(rng, 8, 0.15);
        for (Eigen::Index i = 0; i < z.cols(); ++i)
            if (std::abs((z.col(i) - zs.col(i)).norm() - kSoftL1Zeta) < 1e-3)
                z.col(i) += Vec3::Constant(0.01);
        const PointCloud g = loss_pnc_soft_l1_grad(z, zs);
        PointCloud num(3, z.cols());
        const double h = 1e-6;
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            PointCloud zp = z, zm = z;
            zp.data()[i] += h;
            zm.data()[i] -= h;
            num.data()[i] = (loss_pnc_soft_l1(zp, zs) - loss_pnc_soft_l1(zm, zs)) / (2 * h);
        }
        CHECK(testutil::rel_err(Eigen::VectorXd(g.reshaped()), Eigen::VectorXd(num.reshaped())) < 1e-4);
    }
}

TEST_CASE("sdf loss examples")
{
    const Eigen::Vector3d on(0.01, -0.02, 0.0);
    const Eigen::Vector2d off(0.5, -0.7);
    PointCloud unit(3, 5);
    unit << 1, 0, 0, 0.6, 0, 0, 1, 0, 0.8, 0, 0, 0, 1, 0, 1;
    const SdfLossTerms perfect = loss_sdf(on, on, off, unit);
    CHECK(perfect.surface == 0.0);
    CHECK(std::abs(perfect.eikonal) < 1e-14);
    CHECK(perfect.off == doctest::Approx(200.0 * (std::exp(-50.0) + std::exp(-70.0)) / 2).epsilon(1e-12));
    CHECK(perfect.off < 1e-19);

    const SdfLossTerms doubled = loss_sdf(on, on, off, PointCloud(2.0 * unit));
    CHECK(doubled.eikonal == doctest::Approx(50.0).epsilon(1e-14));

    // Hand-computed five-sample set: three on-manifold, two off-manifold.
    const Eigen::Vector3d values(0.01, -0.02, 0.005);
    const Eigen::Vector3d gt(0.0, 0.0, 0.0);
    const Eigen::Vector2d offv(0.01, -0.03);
    PointCloud grads(3, 5);
    grads << 1.0, 0.0, 0.5, 2.0, 0.0, 0.0, 1.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.9;
    const SdfLossTerms t = loss_sdf(values, gt, offv, grads);
    CHECK(t.surface == doctest::Approx(3000.0 * (0.01 + 0.02 + 0.005) / 3).epsilon(1e-13));
    CHECK(t.off == doctest::Approx(200.0 * (std::exp(-1.0) + std::exp(-3.0)) / 2).epsilon(1e-13));
    CHECK(t.eikonal == doctest::Approx(50.0 * (0.0 + 0.2 + 0.5 + 1.0 + 0.1) / 5).epsilon(1e-13));
    CHECK(t.total() == doctest::Approx(t.surface + t.off + t.eikonal));

    const SdfLossTerms empty = loss_sdf(Eigen::VectorXd(), Eigen::VectorXd(), offv, PointCloud(3, 0));
    CHECK(empty.surface == 0.0);
    CHECK(empty.eikonal == 0.0);
    CHECK_THROWS_AS(loss_sdf(values, offv, offv, grads), Error);
    CHECK_THROWS_AS(loss_sdf(values, gt, offv, PointCloud::Ones(3, 4)), Error);
}

TEST_CASE("sdf loss gradient against finite differences")
{
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    const auto away = [&](double v, double from) { return std::abs(v - from) < 1e-4 ? v + 1e-3 : v; };
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::VectorXd on(4), gt(4), off(3);
        for (int i = 0; i < 4; ++i) {
            gt[i] = u(rng);
            on[i] = away(gt[i] + u(rng), gt[i]);
        }
        for (int i = 0; i < 3; ++i)
            off[i] = away(u(rng), 0.0);
        PointCloud grads = testutil::random_cloud(rng, 7, 1.0);
        for (Eigen::Index i = 0; i < grads.cols(); ++i)
            if (std::abs(grads.col(i).norm() - 1.0) < 1e-3)
                grads.col(i) *= 1.1;

        const SdfLossGradient g = loss_sdf_grad(on, gt, off, grads);
        const double h = 1e-7;
        const auto total = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b, const PointCloud& c) {
            return loss_sdf(a, gt, b, c).total();
        };
        Eigen::VectorXd num_on(4), num_off(3);
        for (int i = 0; i < 4; ++i) {
            Eigen::VectorXd p = on, m = on;
            p[i] += h;
            m[i] -= h;
            num_on[i] = (total(p, off, grads) - total(m, off, grads)) / (2 * h);
        }
        for (int i = 0; i < 3; ++i) {
            Eigen::VectorXd p = off, m = off;
            p[i] += h;
            m[i] -= h;
            num_off[i] = (total(on, p, grads) - total(on, m, grads)) / (2 * h);
        }
        Eigen::VectorXd num_grad(grads.size());
        for (Eigen::Index i = 0; i < grads.size(); ++i) {
            PointCloud p = grads, m = grads;
            p.data()[i] += h;
            m.data()[i] -= h;
            num_grad[i] = (total(on, off, p) - total(on, off, m)) / (2 * h);
        }
        CHECK(testutil::rel_err(g.d_on, num_on) < 1e-4);
        CHECK(testutil::rel_err(g.d_off, num_off) < 1e-4);
        CHECK(testutil::rel_err(Eigen::VectorXd(g.d_gradients.reshaped()), num_grad) < 1e-4);
    }
}

TEST_CASE("self-training only sees certified labels and never touches the decoder")
{
    const LinearBlend dec(asymmetric_basis(4));
    const auto scenes = scenes_for(dec, 12, 1e-3, 9);
    SpyEstimator spy(BiasedOracleEstimator::random(4, 12.0, 0.25, 1e-3, 9));

    std::mt19937_64 rng(9);
    const PointCloud probes = testutil::random_cloud(rng, 500, 0.3);
    const LatentCode code{testutil::random_simplex(rng, 4)};
    const auto snapshot = [&] {
        std::vector<double> v;
        for (Eigen::Index i = 0; i < probes.cols(); ++i) {
            v.push_back(dec.eval(code, probes.col(i)));
            for (const auto& f : dec.basis().fields)
                v.push_back(f->eval(probes.col(i)));
        }
        v.insert(v.end(), dec.basis().diameters.begin(), dec.basis().diameters.end());
        return v;
    };
    const std::vector<double> before = snapshot();

    for (int epoch = 0; epoch < 3; ++epoch) {
        spy.seen.clear();
        const LabelBatch batch = generate_pseudo_labels(scenes, spy, dec, {});
        std::size_t expected = 0;
        for (const auto& o : batch.outcomes)
            if (o.certified)
                expected += scenes[static_cast<std::size_t>(o.object_id)].frames.size();
        self_train_epoch(spy, scenes, dec, {}, {0.5, 0.2}, epoch);
        CHECK(spy.seen.size() == expected);
        for (const auto& l : spy.seen) {
            CHECK(l.certified);
            CHECK(batch.outcomes[static_cast<std::size_t>(l.object_id)].certified);
        }
    }

    const std::vector<double> after = snapshot();
    REQUIRE(before.size() == after.size());
    CHECK(std::memcmp(before.data(), after.data(), before.size() * sizeof(double)) == 0);

    BiasedOracleEstimator est = zero_bias(2);
    const Frame f = toy_frame();
    PseudoLabel bad{0, 0, f.gt_z, f.gt_alpha, false};
    CHECK_THROWS_AS(est.update({bad}, {&f}, {}), Error);
}

// Holds for a corrector run to convergence; the default budget stops early.
TEST_CASE("pseudo-labels are fixed points of the corrector")
{
    const LinearBlend dec(asymmetric_basis(4));
    const auto scenes = scenes_for(dec, 4, 1e-3, 10);
    const auto est = BiasedOracleEstimator::random(4, 6.0, 0.15, 1e-3, 10);
    LabelingConfig cfg;
    cfg.corrector.outer_rounds = 100;
    cfg.corrector.convergence_tol = 1e-14;
    const LabelBatch batch = generate_pseudo_labels(scenes, est, dec, cfg);
    REQUIRE(!batch.labels.empty());
    for (const auto& o : batch.outcomes) {
        if (!o.certified)
            continue;
        const Scene& s = scenes[static_cast<std::size_t>(o.object_id)];
        MultiViewBuffer buf(s.frames.size());
        for (std::size_t v = 0; v < s.frames.size(); ++v)
            buf.push({s.frames[v].x, o.result.z_hat[v]});
        const CorrectionResult again = bcd_correct(buf, o.result.code_hat, dec, cfg.corrector);
        for (std::size_t v = 0; v < s.frames.size(); ++v)
            CHECK((again.z_hat[v] - o.result.z_hat[v]).colwise().norm().maxCoeff() < 1e-6);
        CHECK((again.code_hat.alpha - o.result.code_hat.alpha).norm() < 1e-6);
    }
}

TEST_CASE("a few epochs reduce a moderate bias")
{
    const LinearBlend dec(asymmetric_basis(4));
    const auto scenes = scenes_for(dec, 10, 1e-3, 11);
    auto est = BiasedOracleEstimator::random(4, 5.0, 0.15, 1e-3, 11);
    const double initial = est.bias_norm();
    double prev_fraction = 0.0;
    for (int epoch = 0; epoch < 3; ++epoch) {
        const EpochStats st = self_train_epoch(est, scenes, dec, {}, {0.5, 0.2}, epoch);
        CHECK(st.epoch == epoch);
        CHECK(st.certified_fraction >= prev_fraction);
        CHECK(st.bias_norm == est.bias_norm());
        prev_fraction = st.certified_fraction;
    }
    CHECK(est.bias_norm() < initial);
}
