#pragma once

#include "crisp/certification.hpp"
#include "crisp/corrector.hpp"
#include "crisp/simulator.hpp"

#include <vector>

namespace crisp {

struct Prediction {
    PointCloud z;
    LatentCode code;
};

struct PseudoLabel {
    int object_id = 0;
    int view_id = 0;
    PointCloud z_hat;
    LatentCode code_hat;
    bool certified = true;
};

struct LearningRates {
    double z = 3e-4; ///< coordinate head
    double h = 3e-4; ///< code head
};

struct UpdateStats {
    double mean_lz = 0.0; ///< mean over labels of sum_i ||z_hat_i - z_i||^2
    double mean_lh = 0.0; ///< mean over labels of ||h_hat - h||^2
};

class Estimator {
public:
    virtual ~Estimator() = default;
    [[nodiscard]] virtual Prediction predict(const Frame& frame) const = 0;
    /// One pass of gradient steps over `labels`; frames[i] is the frame of labels[i].
    virtual UpdateStats update(const std::vector<PseudoLabel>& labels, const std::vector<const Frame*>& frames,
                               const LearningRates& lr) = 0;
};

/// Ground truth seen through a parametric bias: Z = B(gt_z) + noise with B a
/// rigid transform about the object origin, and
/// code = project_simplex(gt_alpha + b) with b summing to zero.
class BiasedOracleEstimator final : public Estimator {
public:
    BiasedOracleEstimator(Pose pose_bias, Eigen::VectorXd code_bias, double noise_sigma = 0.0,
                          std::uint64_t seed = 11);

    /// Pose bias of `rotation_deg` about a random axis, zero-sum code bias
    /// of Euclidean norm `code_norm`, both drawn from `seed`.
    static BiasedOracleEstimator random(Eigen::Index dim, double rotation_deg, double code_norm,
                                        double noise_sigma, std::uint64_t seed);

    [[nodiscard]] Prediction predict(const Frame& frame) const override;
    UpdateStats update(const std::vector<PseudoLabel>& labels, const std::vector<const Frame*>& frames,
                       const LearningRates& lr) override;

    struct LossGradient {
        double lz = 0.0; ///< sum_i ||z_i - z_hat_i||^2
        double lh = 0.0; ///< ||h - h_hat||^2
        kernels::Vec6 grad_pose = kernels::Vec6::Zero(); ///< of lz / n, left twist on the bias
        Eigen::VectorXd grad_code;                        ///< of lh
    };
    /// Loss of one label and the gradient the update steps along. The pose
    /// gradient is of the per-point mean lz / n so the step size does not
    /// depend on the cloud size.
    [[nodiscard]] LossGradient loss_gradient(const PseudoLabel& label, const Frame& frame) const;

    [[nodiscard]] const Pose& pose_bias() const { return pose_bias_; }
    [[nodiscard]] const Eigen::VectorXd& code_bias() const { return code_bias_; }
    void set_pose_bias(const Pose& p) { pose_bias_ = p; }
    void set_code_bias(const Eigen::VectorXd& b) { code_bias_ = b; }

    /// ||(log R_b, t_b, b)||.
    [[nodiscard]] double bias_norm() const;

    bool train_pose = true;
    bool train_code = true;

private:
    Pose pose_bias_;
    Eigen::VectorXd code_bias_;
    double noise_sigma_;
    std::uint64_t seed_;
};

struct LabelingConfig {
    SolverKind solver = SolverKind::Bcd;
    bool use_corrector = true;
    CorrectorConfig corrector;
    CertificateConfig certificate;
};

struct ObjectOutcome {
    int object_id = 0;
    bool certified = false;
    CorrectionResult result;
};

struct LabelBatch {
    std::vector<PseudoLabel> labels; ///< certified objects only, one label per view
    std::vector<ObjectOutcome> outcomes;
    [[nodiscard]] double certified_fraction() const;
};

/// Predict, correct (or pass through when use_corrector is false), certify.
LabelBatch generate_pseudo_labels(const std::vector<Scene>& scenes, const Estimator& estimator,
                                  const Decoder& decoder, const LabelingConfig& cfg);

struct EpochStats {
    int epoch = 0;
    double certified_fraction = 0.0;
    double mean_lh = 0.0;
    double mean_lz = 0.0;
    double bias_norm = 0.0;
};

/// Regenerates labels with the current estimator, then updates it on them.
/// bias_norm is measured after the update and is 0 for estimators that are not
/// BiasedOracleEstimator.
EpochStats self_train_epoch(Estimator& estimator, const std::vector<Scene>& scenes, const Decoder& decoder,
                            const LabelingConfig& cfg, const LearningRates& lr, int epoch);

inline constexpr double kSoftL1Zeta = 0.1;

/// Mean over points of q(||z_i - z*_i||), q(e) = e^2 / (2 zeta) for
/// e <= zeta and e - zeta / 2 above.
double loss_pnc_soft_l1(const PointCloud& z, const PointCloud& z_star, double zeta = kSoftL1Zeta);

/// Gradient of loss_pnc_soft_l1 with respect to z.
PointCloud loss_pnc_soft_l1_grad(const PointCloud& z, const PointCloud& z_star, double zeta = kSoftL1Zeta);

struct SdfLossWeights {
    double gamma_surface = 3e3;
    double gamma_off = 2e2;
    double gamma_eikonal = 50.0;
    double a = 100.0;
};

struct SdfLossTerms {
    double surface = 0.0;  ///< gamma_1 mean |f - f*| over the on-manifold set
    double off = 0.0;      ///< gamma_2 mean exp(-a |f|) over the off-manifold set
    double eikonal = 0.0;  ///< gamma_3 mean | ||grad f|| - 1 | over both sets
    [[nodiscard]] double total() const { return surface + off + eikonal; }
};

/// `gradients` has one column per sample of both sets (on-manifold first).
/// A set may be empty, in which case its terms are zero.
SdfLossTerms loss_sdf(const Eigen::VectorXd& on_values, const Eigen::VectorXd& gt_values,
                      const Eigen::VectorXd& off_values, const PointCloud& gradients,
                      const SdfLossWeights& w = {});

struct SdfLossGradient {
    Eigen::VectorXd d_on;
    Eigen::VectorXd d_off;
    PointCloud d_gradients;
};

/// Gradient of loss_sdf(...).total() with respect to on_values, off_values and
/// gradients.
SdfLossGradient loss_sdf_grad(const Eigen::VectorXd& on_values, const Eigen::VectorXd& gt_values,
                              const Eigen::VectorXd& off_values, const PointCloud& gradients,
                              const SdfLossWeights& w = {});

} // namespace crisp
