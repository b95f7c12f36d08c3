#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <stdexcept>
#include <string>
#include <vector>

namespace crisp {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Ordered 3×n point set; column i is point i.
using PointCloud = Eigen::Matrix3Xd;

/// Base of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Point-set alignment could not be solved (rank-deficient cross covariance).
class DegenerateConfiguration : public Error {
public:
    using Error::Error;
};

/// Surface sampling could not find enough points on the zero level set.
class SurfaceNotFound : public Error {
public:
    using Error::Error;
};

/// Malformed input file or configuration.
class FormatError : public Error {
public:
    using Error::Error;
};

struct Aabb {
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Zero();

    [[nodiscard]] Vec3 extent() const { return hi - lo; }
    [[nodiscard]] double diagonal() const { return (hi - lo).norm(); }
    [[nodiscard]] bool contains(const Vec3& p) const
    {
        return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
    }
    [[nodiscard]] Aabb merged(const Aabb& o) const
    {
        return {lo.cwiseMin(o.lo), hi.cwiseMax(o.hi)};
    }
    [[nodiscard]] Aabb padded(double m) const
    {
        return {lo.array() - m, hi.array() + m};
    }
};

inline PointCloud to_cloud(const std::vector<Vec3>& pts)
{
    PointCloud c(3, static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i)
        c.col(static_cast<Eigen::Index>(i)) = pts[i];
    return c;
}

} // namespace crisp
