#include "crisp/selftrain.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <exception>
#include <map>
#include <numbers>

namespace crisp {

namespace {

double sign(double v)
{
    return static_cast<double>((v > 0.0) - (v < 0.0));
}

} // namespace

BiasedOracleEstimator::BiasedOracleEstimator(Pose pose_bias, Eigen::VectorXd code_bias, double noise_sigma,
                                             std::uint64_t seed)
    : pose_bias_(std::move(pose_bias)), code_bias_(std::move(code_bias)), noise_sigma_(noise_sigma), seed_(seed)
{
    if (!(noise_sigma_ >= 0.0))
        throw Error("estimator: noise_sigma must be non-negative");
}

BiasedOracleEstimator BiasedOracleEstimator::random(Eigen::Index dim, double rotation_deg, double code_norm,
                                                    double noise_sigma, std::uint64_t seed)
{
    std::mt19937_64 rng = derived_rng(seed, 0xb1a5);
    std::normal_distribution<double> n01(0.0, 1.0);
    Vec3 axis(n01(rng), n01(rng), n01(rng));
    Pose bias;
    bias.rotation = axis_angle(axis, rotation_deg * std::numbers::pi / 180.0);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(dim);
    if (dim > 1 && code_norm > 0.0) {
        for (Eigen::Index i = 0; i < dim; ++i)
            b[i] = n01(rng);
        b.array() -= b.mean();
        b *= code_norm / b.norm();
    }
    return {bias, b, noise_sigma, seed};
}

Prediction BiasedOracleEstimator::predict(const Frame& frame) const
{
    if (code_bias_.size() != frame.gt_alpha.dim())
        throw Error("estimator: code bias dimension does not match the frame");
    Prediction p;
    p.z = pose_bias_.apply(frame.gt_z);
    if (noise_sigma_ > 0.0) {
        std::mt19937_64 rng = derived_rng(seed_, static_cast<std::uint64_t>(frame.object_id),
                                          static_cast<std::uint64_t>(frame.view_id) + 1);
        std::normal_distribution<double> noise(0.0, noise_sigma_);
        for (Eigen::Index i = 0; i < p.z.cols(); ++i)
            for (int a = 0; a < 3; ++a)
                p.z(a, i) += noise(rng);
    }
    p.code.alpha = project_simplex(frame.gt_alpha.alpha + code_bias_);
    return p;
}

BiasedOracleEstimator::LossGradient BiasedOracleEstimator::loss_gradient(const PseudoLabel& label,
                                                                          const Frame& frame) const
{
    const Prediction pred = predict(frame);
    if (pred.z.cols() != label.z_hat.cols())
        throw Error("estimator: label and frame differ in length");
    LossGradient out;
    const PointCloud y = pose_bias_.apply(frame.gt_z);
    const PointCloud r = pred.z - label.z_hat;
    out.lz = r.squaredNorm();
    Vec3 gw = Vec3::Zero(), gv = Vec3::Zero();
    for (Eigen::Index i = 0; i < r.cols(); ++i) {
        gw += 2.0 * Vec3(y.col(i)).cross(Vec3(r.col(i)));
        gv += 2.0 * r.col(i);
    }
    const auto n = static_cast<double>(r.cols());
    out.grad_pose << gw / n, gv / n;

    const Eigen::VectorXd dh = pred.code.alpha - label.code_hat.alpha;
    out.lh = dh.squaredNorm();
    // The projection is affine on the face containing its output; its
    // Jacobian there is I - 11^T / |S| restricted to the support S.
    const Eigen::VectorXd g = 2.0 * dh;
    out.grad_code = Eigen::VectorXd::Zero(g.size());
    double mean = 0.0;
    int support = 0;
    for (Eigen::Index i = 0; i < g.size(); ++i)
        if (pred.code.alpha[i] > 0.0) {
            mean += g[i];
            ++support;
        }
    if (support > 0) {
        mean /= support;
        for (Eigen::Index i = 0; i < g.size(); ++i)
            if (pred.code.alpha[i] > 0.0)
                out.grad_code[i] = g[i] - mean;
    }
    return out;
}

UpdateStats BiasedOracleEstimator::update(const std::vector<PseudoLabel>& labels,
                                          const std::vector<const Frame*>& frames, const LearningRates& lr)
{
    if (labels.size() != frames.size())
        throw Error("estimator update: labels and frames differ in count");
    UpdateStats stats;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!labels[i].certified)
            throw Error("estimator update: uncertified pseudo-label");
        const LossGradient lg = loss_gradient(labels[i], *frames[i]);
        stats.mean_lz += lg.lz;
        stats.mean_lh += lg.lh;
        if (train_pose)
            pose_bias_ = exp_se3(Twist::from_vector(-lr.z * lg.grad_pose)).compose(pose_bias_);
        if (train_code)
            code_bias_ -= lr.h * lg.grad_code;
    }
    if (!labels.empty()) {
        stats.mean_lz /= static_cast<double>(labels.size());
        stats.mean_lh /= static_cast<double>(labels.size());
    }
    return stats;
}

double BiasedOracleEstimator::bias_norm() const
{
    return std::sqrt(log_so3(pose_bias_.rotation).squaredNorm() + pose_bias_.translation.squaredNorm() +
                     code_bias_.squaredNorm());
}

double LabelBatch::certified_fraction() const
{
    if (outcomes.empty())
        return 0.0;
    std::size_t n = 0;
    for (const auto& o : outcomes)
        n += o.certified ? 1 : 0;
    return static_cast<double>(n) / static_cast<double>(outcomes.size());
}

LabelBatch generate_pseudo_labels(const std::vector<Scene>& scenes, const Estimator& estimator,
                                  const Decoder& decoder, const LabelingConfig& cfg)
{
    cfg.corrector.validate();
    cfg.certificate.validate();
    LabelBatch batch;
    batch.outcomes.resize(scenes.size());
    std::vector<std::exception_ptr> errors(scenes.size());

#pragma omp parallel for schedule(dynamic, 1)
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        try {
            const Scene& scene = scenes[s];
            if (scene.frames.empty())
                throw Error("pseudo-labels: scene without frames");
            MultiViewBuffer buffer(std::max(cfg.corrector.buffer_capacity, scene.frames.size()));
            Eigen::VectorXd code = Eigen::VectorXd::Zero(decoder.dim());
            for (const auto& f : scene.frames) {
                Prediction p = estimator.predict(f);
                code += p.code.alpha;
                buffer.push({f.x, std::move(p.z)});
            }
            const LatentCode h{project_simplex(code / static_cast<double>(scene.frames.size()))};

            ObjectOutcome& out = batch.outcomes[s];
            out.object_id = scene.object_id;
            if (!cfg.use_corrector)
                out.result = uncorrected(buffer, h);
            else if (cfg.solver == SolverKind::Bcd)
                out.result = bcd_correct(buffer, h, decoder, cfg.corrector);
            else
                out.result = lsq_correct(buffer, h, decoder, cfg.corrector);
            out.certified = oc_certificate(out.result.z_hat_stacked(), out.result.code_hat, decoder, cfg.certificate);
            out.result.certified = out.certified;
        } catch (...) {
            errors[s] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);

    for (std::size_t s = 0; s < scenes.size(); ++s) {
        const ObjectOutcome& out = batch.outcomes[s];
        if (!out.certified)
            continue;
        for (std::size_t v = 0; v < scenes[s].frames.size(); ++v)
            batch.labels.push_back({scenes[s].object_id, scenes[s].frames[v].view_id, out.result.z_hat[v],
                                    out.result.code_hat, true});
    }
    return batch;
}

EpochStats self_train_epoch(Estimator& estimator, const std::vector<Scene>& scenes, const Decoder& decoder,
                            const LabelingConfig& cfg, const LearningRates& lr, int epoch)
{
    const LabelBatch batch = generate_pseudo_labels(scenes, estimator, decoder, cfg);

    std::map<std::pair<int, int>, const Frame*> index;
    for (const auto& s : scenes)
        for (const auto& f : s.frames)
            index[{f.object_id, f.view_id}] = &f;
    std::vector<const Frame*> frames;
    frames.reserve(batch.labels.size());
    for (const auto& l : batch.labels)
        frames.push_back(index.at({l.object_id, l.view_id}));

    const UpdateStats u = estimator.update(batch.labels, frames, lr);
    EpochStats stats;
    stats.epoch = epoch;
    stats.certified_fraction = batch.certified_fraction();
    stats.mean_lh = u.mean_lh;
    stats.mean_lz = u.mean_lz;
    if (const auto* b = dynamic_cast<const BiasedOracleEstimator*>(&estimator))
        stats.bias_norm = b->bias_norm();
    return stats;
}

double loss_pnc_soft_l1(const PointCloud& z, const PointCloud& z_star, double zeta)
{
    if (z.cols() != z_star.cols() || z.cols() == 0)
        throw Error("soft-L1 loss: point sets must be non-empty and of equal length");
    if (!(zeta > 0.0))
        throw Error("soft-L1 loss: zeta must be positive");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < z.cols(); ++i) {
        const double e = (z.col(i) - z_star.col(i)).norm();
        acc += e <= zeta ? e * e / (2.0 * zeta) : e - zeta / 2.0;
    }
    return acc / static_cast<double>(z.cols());
}

PointCloud loss_pnc_soft_l1_grad(const PointCloud& z, const PointCloud& z_star, double zeta)
{
    if (z.cols() != z_star.cols() || z.cols() == 0)
        throw Error("soft-L1 loss: point sets must be non-empty and of equal length");
    PointCloud g(3, z.cols());
    const auto n = static_cast<double>(z.cols());
    for (Eigen::Index i = 0; i < z.cols(); ++i) {
        const Vec3 d = z.col(i) - z_star.col(i);
        const double e = d.norm();
        g.col(i) = (e <= zeta ? d / zeta : d / e) / n;
    }
    return g;
}

namespace {

void check_sdf_inputs(const Eigen::VectorXd& on, const Eigen::VectorXd& gt, const Eigen::VectorXd& off,
                      const PointCloud& grads)
{
    if (on.size() != gt.size())
        throw Error("sdf loss: on-manifold values and targets differ in length");
    if (grads.cols() != 0 && grads.cols() != on.size() + off.size())
        throw Error("sdf loss: need one gradient per sample");
}

} // namespace

SdfLossTerms loss_sdf(const Eigen::VectorXd& on_values, const Eigen::VectorXd& gt_values,
                      const Eigen::VectorXd& off_values, const PointCloud& gradients, const SdfLossWeights& w)
{
    check_sdf_inputs(on_values, gt_values, off_values, gradients);
    SdfLossTerms t;
    if (on_values.size() > 0)
        t.surface = w.gamma_surface * (on_values - gt_values).cwiseAbs().mean();
    if (off_values.size() > 0)
        t.off = w.gamma_off * (-w.a * off_values.cwiseAbs().array()).exp().mean();
    if (gradients.cols() > 0)
        t.eikonal = w.gamma_eikonal * (gradients.colwise().norm().array() - 1.0).abs().mean();
    return t;
}

SdfLossGradient loss_sdf_grad(const Eigen::VectorXd& on_values, const Eigen::VectorXd& gt_values,
                              const Eigen::VectorXd& off_values, const PointCloud& gradients,
                              const SdfLossWeights& w)
{
    check_sdf_inputs(on_values, gt_values, off_values, gradients);
    SdfLossGradient g;
    g.d_on = Eigen::VectorXd::Zero(on_values.size());
    for (Eigen::Index i = 0; i < on_values.size(); ++i)
        g.d_on[i] = w.gamma_surface * sign(on_values[i] - gt_values[i]) / static_cast<double>(on_values.size());
    g.d_off = Eigen::VectorXd::Zero(off_values.size());
    for (Eigen::Index i = 0; i < off_values.size(); ++i) {
        const double f = off_values[i];
        g.d_off[i] = -w.gamma_off * w.a * sign(f) * std::exp(-w.a * std::abs(f)) /
                     static_cast<double>(off_values.size());
    }
    g.d_gradients = PointCloud::Zero(3, gradients.cols());
    for (Eigen::Index i = 0; i < gradients.cols(); ++i) {
        const double len = gradients.col(i).norm();
        if (len > 0.0)
            g.d_gradients.col(i) = w.gamma_eikonal * sign(len - 1.0) * gradients.col(i) /
                                   (len * static_cast<double>(gradients.cols()));
    }
    return g;
}

} // namespace crisp
