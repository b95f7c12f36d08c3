#pragma once

// Data-parallel inner loops. Every kernel has an OpenMP version in
// crisp::kernels and a plain loop in crisp::kernels::serial that the tests use
// as the reference. Reductions write per-point terms to a buffer and sum it in
// index order afterwards, so results do not depend on the thread count.

#include "crisp/sdf.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace crisp {

class Decoder;

enum class Norm { L1, L2 };

namespace kernels {

using Vec6 = Eigen::Matrix<double, 6, 1>;

/// Sum of squared field values at R x_i + t, with the gradient with respect to
/// a left twist (omega, v) applied to the pose.
struct PoseObjective {
    double value = 0.0;
    Vec6 grad = Vec6::Zero();
};

/// Sum of squared decoded values at fixed points, with the gradient with
/// respect to the code.
struct CodeObjective {
    double value = 0.0;
    Eigen::VectorXd grad;
};

Eigen::VectorXd eval_batch(const SdfField& field, const PointCloud& pts);

/// n × m matrix with entry (i, j) = columns[j]->eval(pts.col(i)).
Eigen::MatrixXd field_matrix(const PointCloud& pts, std::span<const SdfField* const> columns);

/// Newton-projects each column of `pts` onto the zero level set in place.
/// Returns 1 for columns that reached |f| < tol.
std::vector<std::uint8_t> project_to_surface(const SdfField& field, PointCloud& pts, double tol,
                                             int max_steps);

std::vector<float> bake_grid(const SdfField& field, const Aabb& bounds,
                             const std::array<std::uint32_t, 3>& res);

/// For every query column, the distance to its nearest neighbour in `ref`.
Eigen::VectorXd nearest_distances(const PointCloud& query, const PointCloud& ref, Norm norm);

PoseObjective pose_objective(const SdfField& field, const PointCloud& x, const Mat3& rotation,
                             const Vec3& translation, bool with_gradient = true);

CodeObjective code_objective(const Decoder& decoder, const PointCloud& z,
                             const Eigen::VectorXd& alpha, bool with_gradient = true);

namespace serial {

Eigen::VectorXd eval_batch(const SdfField& field, const PointCloud& pts);
Eigen::MatrixXd field_matrix(const PointCloud& pts, std::span<const SdfField* const> columns);
std::vector<std::uint8_t> project_to_surface(const SdfField& field, PointCloud& pts, double tol,
                                             int max_steps);
std::vector<float> bake_grid(const SdfField& field, const Aabb& bounds,
                             const std::array<std::uint32_t, 3>& res);
Eigen::VectorXd nearest_distances(const PointCloud& query, const PointCloud& ref, Norm norm);
PoseObjective pose_objective(const SdfField& field, const PointCloud& x, const Mat3& rotation,
                             const Vec3& translation, bool with_gradient = true);
CodeObjective code_objective(const Decoder& decoder, const PointCloud& z,
                             const Eigen::VectorXd& alpha, bool with_gradient = true);

} // namespace serial

/// Newton projection of a single point; shared by both kernel variants.
bool project_point(const SdfField& field, Vec3& p, double tol, int max_steps);

} // namespace kernels
} // namespace crisp
