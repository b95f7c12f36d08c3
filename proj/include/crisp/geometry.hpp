#pragma once

#include "crisp/kernels.hpp"
#include "crisp/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>

namespace crisp {

/// Rigid transform z = R x + t. Throughout the library a frame's pose maps
/// camera-frame depth points onto pose-normalized object coordinates.
struct Pose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
    /// Number of compositions since the rotation was last re-orthonormalized.
    std::uint32_t chain = 0;

    static Pose identity() { return {}; }

    [[nodiscard]] Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
    [[nodiscard]] PointCloud apply(const PointCloud& pts) const;
    [[nodiscard]] Pose inverse() const;
    /// (this ∘ rhs)(x) = this(rhs(x)). Re-orthonormalizes once the chain of
    /// compositions exceeds kMaxChain.
    [[nodiscard]] Pose compose(const Pose& rhs) const;
    [[nodiscard]] Pose orthonormalized() const;

    static constexpr std::uint32_t kMaxChain = 100;
};

/// z = s R x + t.
struct SimPose {
    double scale = 1.0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    [[nodiscard]] Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
    [[nodiscard]] PointCloud apply(const PointCloud& pts) const;
};

/// se(3) element: rotation vector omega (rad) and translational part v (m).
struct Twist {
    Vec3 omega = Vec3::Zero();
    Vec3 v = Vec3::Zero();

    [[nodiscard]] kernels::Vec6 vector() const
    {
        kernels::Vec6 out;
        out << omega, v;
        return out;
    }
    static Twist from_vector(const kernels::Vec6& x) { return {x.head<3>(), x.tail<3>()}; }
};

Mat3 hat(const Vec3& w);
Mat3 exp_so3(const Vec3& omega);
Vec3 log_so3(const Mat3& rotation);
Pose exp_se3(const Twist& xi);
Twist log_se3(const Pose& pose);

/// argmin over (R, t) of sum ||R x_i + t - z_i||^2 (Arun / Kabsch with the
/// determinant fix). Throws DegenerateConfiguration when the cross covariance
/// has rank below 2.
Pose arun_fit(const PointCloud& x, const PointCloud& z);

/// argmin over (s, R, t) of sum ||s R x_i + t - z_i||^2 (Umeyama).
SimPose umeyama_fit(const PointCloud& x, const PointCloud& z);

double alignment_residual(const Pose& pose, const PointCloud& x, const PointCloud& z);
double alignment_residual(const SimPose& pose, const PointCloud& x, const PointCloud& z);

/// Geodesic angle between two rotations, in degrees.
double rotation_error_deg(const Mat3& a, const Mat3& b);

/// Mean over model points of the distance from pose_est(m_i) to the nearest
/// pose_gt(m_j). Exhaustive search up to kAddsExhaustiveLimit points, spatial
/// hashing above.
double adds_metric(const Pose& pose_est, const Pose& pose_gt, const PointCloud& model);

inline constexpr Eigen::Index kAddsExhaustiveLimit = 5000;

/// Symmetric chamfer distance: the average of the two directed mean
/// nearest-neighbour distances. L2 uses Euclidean distance, L1 the Manhattan
/// distance.
double chamfer(const PointCloud& a, const PointCloud& b, Norm norm);

/// Nearest-neighbour distances (Euclidean) through a uniform hash grid.
Eigen::VectorXd hashed_nearest_distances(const PointCloud& query, const PointCloud& ref);

/// CSV with header "x,y,z" and one point per row.
void write_cloud_csv(const std::filesystem::path& path, const PointCloud& pts);
PointCloud read_cloud_csv(const std::filesystem::path& path);

} // namespace crisp
