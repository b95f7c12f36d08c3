#pragma once

#include "crisp/corrector.hpp"
#include "crisp/geometry.hpp"
#include "crisp/shape_model.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace crisp {

struct SceneConfig {
    int n_points = 200; ///< per view, outliers included
    int n_views = 1;
    double noise_sigma = 0.0;      ///< Gaussian noise on X, meters
    double outlier_fraction = 0.0; ///< in [0, 1)
    double outlier_radius = 0.5;   ///< ball around the view centroid, meters
    double min_distance = 1.5;     ///< camera to object origin, meters
    double max_distance = 3.0;
    bool hemisphere_culling = true;
    std::uint64_t seed = 1;
    /// Fixed ground-truth code; sampled uniformly on the simplex when absent.
    std::optional<LatentCode> gt_alpha;
    /// Camera directions in the object frame, one per view. Random when empty.
    std::vector<Vec3> view_directions;

    void validate() const;
};

/// One view. gt_pose maps camera coordinates to object coordinates, so
/// gt_z.col(i) == gt_pose.apply(x.col(i)) exactly.
struct Frame {
    PointCloud x;
    PointCloud x_clean; ///< before noise and outlier replacement
    Pose gt_pose;
    LatentCode gt_alpha;
    PointCloud gt_z;
    std::vector<int> outlier_indices; ///< ascending
    int object_id = 0;
    int view_id = 0;
};

struct Scene {
    int object_id = 0;
    LatentCode gt_alpha;
    std::vector<Frame> frames;
};

/// Generator seeded from (seed, stream) so scenes can be built in any order.
std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t sub = 0);

/// Uniform sample from the probability simplex.
LatentCode sample_simplex(Eigen::Index dim, std::mt19937_64& rng);

/// Haar-uniform rotation.
Mat3 random_rotation(std::mt19937_64& rng);

/// Rotation by `angle` about `axis`.
Mat3 axis_angle(const Vec3& axis, double angle);

/// Builds object `object_id`: every view samples the decoded ground-truth
/// surface, keeps points whose outward normal faces the camera, maps them to
/// the camera frame and adds noise and outliers.
Scene make_scene(const Decoder& decoder, const SceneConfig& cfg, int object_id = 0);

struct PerturbationModel {
    double z_noise_sigma = 0.0;
    double rotation_deg = 0.0;  ///< magnitude of the rigid perturbation of Z
    double translation_m = 0.0;
    double code_perturb = 0.0;  ///< L1 size of the zero-sum code offset before projection
    std::uint64_t seed = 7;
};

struct Estimate {
    PointCloud z;
    LatentCode alpha;
    Pose delta; ///< rigid perturbation applied to gt_z
};

/// Z_est = delta(gt_z) + noise, alpha_est = project_simplex(gt_alpha + offset).
Estimate synth_estimates(const Frame& frame, const PerturbationModel& pm);

/// Object-level estimate: per-view Z and one code shared by all views.
struct SceneEstimate {
    std::vector<PointCloud> z;
    LatentCode alpha;
};
SceneEstimate synth_scene_estimates(const Scene& scene, const PerturbationModel& pm);

MultiViewBuffer make_buffer(const Scene& scene, const std::vector<PointCloud>& z, std::size_t capacity = 50);

/// The estimate itself, as if no correction ran: poses from arun_fit and the
/// raw Z.
CorrectionResult uncorrected(const MultiViewBuffer& buffer, const LatentCode& code);

struct MetricsRecord {
    double adds = 0.0;        ///< mean over views, meters
    double chamfer_l1 = 0.0;
    double chamfer_l2 = 0.0;
    double code_error = 0.0;  ///< Euclidean
    double rotation_error_deg = 0.0;
    double translation_error = 0.0;
};

struct EvaluationOptions {
    std::size_t samples = 1000;
    std::uint64_t seed = 0xe7a1ULL;
};

/// Metrics of `result` against the ground truth of `scene`. Both shapes are
/// sampled with the same seed, so identical fields give identical samples.
MetricsRecord evaluate(const CorrectionResult& result, const Scene& scene, const Decoder& decoder,
                       const EvaluationOptions& opts = {});

/// K asymmetric composite shapes (K <= 10) of roughly 0.3 m extent.
ShapeBasis asymmetric_basis(int k);

/// {sphere, the same sphere with a bump on +z}. Away from the bump the two
/// fields coincide.
ShapeBasis sphere_bump_basis();

inline constexpr double kBumpSphereRadius = 0.2;

} // namespace crisp
