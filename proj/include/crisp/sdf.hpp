#pragma once

#include "crisp/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace crisp {

/// Points with |f| below this are on the surface.
inline constexpr double kSurfaceTol = 1e-6;
/// Central-difference step for fields without a closed-form gradient.
inline constexpr double kFdStep = 1e-4;

/// A signed distance function: negative inside, positive outside, zero on
/// the surface. Implementations are immutable and safe to share across
/// threads.
class SdfField {
public:
    virtual ~SdfField() = default;

    [[nodiscard]] virtual double eval(const Vec3& p) const = 0;

    /// Defaults to central differences with step kFdStep.
    [[nodiscard]] virtual Vec3 gradient(const Vec3& p) const;

    /// Box that contains the zero level set; surface sampling seeds are
    /// drawn from it.
    [[nodiscard]] virtual Aabb bounds() const = 0;
};

using FieldPtr = std::shared_ptr<const SdfField>;

Vec3 central_difference_gradient(const SdfField& f, const Vec3& p, double h);

enum class PrimitiveKind { Sphere, Box, Torus, Capsule, Superquadric };

std::string to_string(PrimitiveKind k);
PrimitiveKind primitive_kind_from_string(const std::string& s);

/// Closed-form primitive centered at `offset`.
///
/// Parameter layout per kind:
///   Sphere        {radius}
///   Box           {half_x, half_y, half_z}
///   Torus         {major_radius, minor_radius}        ring in the xy plane
///   Capsule       {half_length, radius}               segment along z
///   Superquadric  {a, b, c, eps1, eps2}
///
/// Sphere, box, torus and capsule are exact distance functions. The
/// superquadric uses the radial distance along the ray from its center,
/// r (1 - G(p)^(-eps1/2)) with G the inside-outside function. That value has
/// the right sign and zero set; its magnitude over-estimates the Euclidean
/// distance by at most 1/cos(theta), theta being the angle between the ray
/// and the surface normal where the ray crosses the surface. It is exact for
/// a = b = c, eps1 = eps2 = 1.
class AnalyticPrimitive final : public SdfField {
public:
    AnalyticPrimitive(PrimitiveKind kind, std::vector<double> params, Vec3 offset = Vec3::Zero());

    [[nodiscard]] double eval(const Vec3& p) const override;
    [[nodiscard]] Vec3 gradient(const Vec3& p) const override;
    [[nodiscard]] Aabb bounds() const override;

    [[nodiscard]] PrimitiveKind kind() const { return kind_; }
    [[nodiscard]] const std::vector<double>& params() const { return params_; }
    [[nodiscard]] const Vec3& offset() const { return offset_; }

private:
    PrimitiveKind kind_;
    std::vector<double> params_;
    Vec3 offset_;
};

FieldPtr make_sphere(double radius, const Vec3& offset = Vec3::Zero());
FieldPtr make_box(const Vec3& half_extents, const Vec3& offset = Vec3::Zero());
FieldPtr make_torus(double major_radius, double minor_radius, const Vec3& offset = Vec3::Zero());
FieldPtr make_capsule(double half_length, double radius, const Vec3& offset = Vec3::Zero());
FieldPtr make_superquadric(const Vec3& radii, double eps1, double eps2,
                           const Vec3& offset = Vec3::Zero());

/// Union of fields. smoothness = 0 is the exact min; k > 0 is the quadratic
/// smooth-min with blend radius k, which keeps the gradient continuous across
/// the seam.
class UnionField final : public SdfField {
public:
    UnionField(std::vector<FieldPtr> children, double smoothness);

    [[nodiscard]] double eval(const Vec3& p) const override;
    [[nodiscard]] Vec3 gradient(const Vec3& p) const override;
    [[nodiscard]] Aabb bounds() const override;

    [[nodiscard]] const std::vector<FieldPtr>& children() const { return children_; }
    [[nodiscard]] double smoothness() const { return k_; }

private:
    std::vector<FieldPtr> children_;
    double k_;
};

FieldPtr make_union(std::vector<FieldPtr> children, double smoothness = 0.0);

/// f(p) = value everywhere. Only useful as a field with an empty level set.
class ConstantField final : public SdfField {
public:
    ConstantField(double value, Aabb box) : value_(value), box_(box) {}
    [[nodiscard]] double eval(const Vec3&) const override { return value_; }
    [[nodiscard]] Vec3 gradient(const Vec3&) const override { return Vec3::Zero(); }
    [[nodiscard]] Aabb bounds() const override { return box_; }

private:
    double value_;
    Aabb box_;
};

/// Field sampled on a regular lattice of resolution[0] × resolution[1] ×
/// resolution[2] nodes spanning `bounds` (nodes on both faces). Inside the box
/// the value is trilinearly interpolated; outside, it is the value at the
/// nearest box point plus the distance to the box.
///
/// The gradient is a central difference whose step is one lattice spacing per
/// axis, which equals the trilinear interpolation of node-centered
/// differences: continuous across cells and second-order accurate.
class GridSdf final : public SdfField {
public:
    using Resolution = std::array<std::uint32_t, 3>;

    GridSdf(Aabb bounds, Resolution resolution, std::vector<float> values);

    /// Samples `field` at every lattice node.
    static GridSdf bake(const SdfField& field, const Aabb& bounds, Resolution resolution);

    [[nodiscard]] double eval(const Vec3& p) const override;
    [[nodiscard]] Vec3 gradient(const Vec3& p) const override;
    [[nodiscard]] Aabb bounds() const override { return bounds_; }

    [[nodiscard]] const Resolution& resolution() const { return res_; }
    [[nodiscard]] const std::vector<float>& values() const { return values_; }
    [[nodiscard]] Vec3 spacing() const;
    [[nodiscard]] float node(std::uint32_t i, std::uint32_t j, std::uint32_t k) const
    {
        return values_[i + res_[0] * (j + static_cast<std::size_t>(res_[1]) * k)];
    }

    /// Little-endian binary: "GSDF", u32 version, 6×f64 bounds (lo then hi),
    /// 3×u32 resolution, f32 samples with x fastest.
    void write(const std::filesystem::path& path) const;
    static GridSdf read(const std::filesystem::path& path);

    static constexpr std::uint32_t kVersion = 1;

private:
    double interpolate(const Vec3& p) const;

    Aabb bounds_;
    Resolution res_;
    std::vector<float> values_;
};

struct SurfaceSampling {
    double tol = kSurfaceTol;
    int max_newton_steps = 20;
    /// Seed batches tried before giving up.
    int max_batches = 40;
};

/// Returns n points with |f| < tol. Seeds are uniform in field.bounds() and
/// projected with Newton steps p <- p - f(p) grad / |grad|^2; seeds that do not
/// converge are dropped. Deterministic in `seed`.
PointCloud sample_surface(const SdfField& field, std::size_t n, std::uint64_t seed,
                          const SurfaceSampling& opts = {});

/// Diagonal of the axis-aligned box around `samples` surface points.
double bounding_box_diameter(const SdfField& field, std::size_t samples = 2000,
                             std::uint64_t seed = 0x5eedULL);

} // namespace crisp
