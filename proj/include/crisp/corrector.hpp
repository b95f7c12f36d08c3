#pragma once

#include "crisp/geometry.hpp"
#include "crisp/kernels.hpp"
#include "crisp/shape_model.hpp"

#include <deque>
#include <optional>
#include <string>
#include <vector>

namespace crisp {

struct CorrectorConfig {
    double z_step = 1e-3;
    int z_iters = 50;
    double h_step = 1e-2;
    int h_iters = 25;
    int outer_rounds = 3;
    double convergence_tol = 1e-6;
    std::size_t buffer_capacity = 50;

    /// Throws Error on non-positive steps or iteration counts.
    void validate() const;
};

/// One view of an object: depth points X and estimated coordinates Z.
struct ViewObservation {
    PointCloud x;
    PointCloud z;
};

/// Views of a single object, oldest first. Pushing past capacity drops the
/// oldest view.
class MultiViewBuffer {
public:
    explicit MultiViewBuffer(std::size_t capacity = 50);

    void push(ViewObservation view);
    [[nodiscard]] const std::deque<ViewObservation>& views() const { return views_; }
    [[nodiscard]] std::size_t size() const { return views_.size(); }
    [[nodiscard]] bool empty() const { return views_.empty(); }
    [[nodiscard]] std::size_t capacity() const { return capacity_; }

private:
    std::size_t capacity_;
    std::deque<ViewObservation> views_;
};

enum class SolverKind { Bcd, Lsq };

std::string to_string(SolverKind s);
SolverKind solver_from_string(const std::string& s);

struct CorrectionResult {
    SolverKind solver = SolverKind::Bcd;
    std::vector<PointCloud> z_hat; ///< per view, R_v X_v + t_v
    std::vector<Pose> poses;       ///< per view
    LatentCode code_hat;
    std::optional<ActiveShapeCoeffs> coeffs; ///< LSQ only
    std::vector<double> objective_trace;
    int outer_rounds = 0;
    int z_iterations = 0;
    int h_iterations = 0;
    bool certified = false;

    [[nodiscard]] PointCloud z_hat_stacked() const;
};

/// F(Z | alpha): Procrustes-fit (R, t) from X to Z, then the sum of squared
/// decoded values at R x_i + t.
double objective_F(const PointCloud& z, const LatentCode& code, const PointCloud& x, const Decoder& decoder);

/// G(R, t) = sum f(R x_i + t | alpha)^2 with its left-twist gradient.
kernels::PoseObjective pose_objective(const PointCloud& x, const Pose& pose, const LatentCode& code,
                                      const Decoder& decoder);

struct ZUpdate {
    Pose pose;
    PointCloud z_hat;
    double initial = 0.0;
    double final = 0.0;
    int iterations = 0;
};

/// Gradient descent on SE(3) from the Procrustes fit of (X, Z_init).
///
/// Each iteration rotates about the current centroid c of the transformed
/// points and translates; the rotational gradient is divided by the mean
/// squared radius about c so both blocks have comparable curvature. A step
/// that does not lower G is halved and retried; an accepted step doubles the
/// next trial step.
ZUpdate z_update(const PointCloud& x, const PointCloud& z_init, const LatentCode& code,
                 const Decoder& decoder, const CorrectorConfig& cfg);

struct ShapeUpdate {
    LatentCode code;
    double initial = 0.0;
    double final = 0.0;
    int iterations = 0;
};

/// Projected gradient descent on sum f(z_i | alpha)^2 over the simplex, with
/// the same halving/doubling step rule as z_update.
ShapeUpdate shape_update_pgd(const PointCloud& z_hat, const LatentCode& alpha_init, const Decoder& decoder,
                             const CorrectorConfig& cfg);

inline constexpr double kLsqRidge = 1e-10;

/// Surface samples behind d_0 in lsq_correct.
inline constexpr std::size_t kEstimateDiameterSamples = 1000;

struct SimplexLsq {
    Eigen::VectorXd c;
    double objective = 0.0;     ///< ||A c||^2
    double kkt_residual = 0.0;  ///< ||c - P(c - grad / L)||, L the gradient Lipschitz constant
    int iterations = 0;
};

/// min ||A c||^2 + ridge ||c||^2 over the simplex: accelerated projected
/// gradient, followed by an equality-constrained solve on the detected
/// support that is kept when it is feasible and no worse.
SimplexLsq solve_simplex_lsq(const Eigen::MatrixXd& a, double ridge = kLsqRidge);

/// Gradient-mapping residual ||c - P(c - eta grad)|| for q(c) = c^T Q c.
double simplex_kkt_residual(const Eigen::MatrixXd& q, const Eigen::VectorXd& c, double eta);

/// min ||F(Z) D c||^2 over the simplex.
SimplexLsq shape_update_lsq(const PointCloud& z_hat, const Decoder& decoder, const LatentCode& h_est,
                            const Eigen::VectorXd& d);

/// c_0 d_0 h_est + sum c_k d_k e_k, rescaled to sum to one.
LatentCode recombine_code(const ActiveShapeCoeffs& coeffs, const Eigen::VectorXd& d, const LatentCode& h_est);

/// Block coordinate descent: per round, z_update on every view, then one
/// shape_update_pgd on the stacked corrected coordinates.
CorrectionResult bcd_correct(const MultiViewBuffer& buffer, const LatentCode& alpha_init,
                             const Decoder& decoder, const CorrectorConfig& cfg);

/// z_update on every view with the estimated code, one simplex least squares
/// over the stacked coordinates, then recombination of the code.
/// `estimate_diameter` overrides the surface-sampled diameter of the decoded
/// estimate (d_0 = 1 / diameter).
CorrectionResult lsq_correct(const MultiViewBuffer& buffer, const LatentCode& h_est, const Decoder& decoder,
                             const CorrectorConfig& cfg, std::optional<double> estimate_diameter = {});

} // namespace crisp
