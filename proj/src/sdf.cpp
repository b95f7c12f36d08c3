#include "crisp/sdf.hpp"

#include "crisp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace crisp {

Vec3 SdfField::gradient(const Vec3& p) const
{
    return central_difference_gradient(*this, p, kFdStep);
}

Vec3 central_difference_gradient(const SdfField& f, const Vec3& p, double h)
{
    Vec3 g;
    for (int a = 0; a < 3; ++a) {
        Vec3 e = Vec3::Zero();
        e[a] = h;
        g[a] = (f.eval(p + e) - f.eval(p - e)) / (2.0 * h);
    }
    return g;
}

std::string to_string(PrimitiveKind k)
{
    switch (k) {
    case PrimitiveKind::Sphere: return "sphere";
    case PrimitiveKind::Box: return "box";
    case PrimitiveKind::Torus: return "torus";
    case PrimitiveKind::Capsule: return "capsule";
    case PrimitiveKind::Superquadric: return "superquadric";
    }
    return "unknown";
}

PrimitiveKind primitive_kind_from_string(const std::string& s)
{
    if (s == "sphere") return PrimitiveKind::Sphere;
    if (s == "box") return PrimitiveKind::Box;
    if (s == "torus") return PrimitiveKind::Torus;
    if (s == "capsule") return PrimitiveKind::Capsule;
    if (s == "superquadric") return PrimitiveKind::Superquadric;
    throw FormatError("unknown primitive kind '" + s + "'");
}

namespace {

std::size_t expected_params(PrimitiveKind k)
{
    switch (k) {
    case PrimitiveKind::Sphere: return 1;
    case PrimitiveKind::Box: return 3;
    case PrimitiveKind::Torus: return 2;
    case PrimitiveKind::Capsule: return 2;
    case PrimitiveKind::Superquadric: return 5;
    }
    return 0;
}

double superquadric_inside_outside(const Vec3& q, double a, double b, double c, double e1, double e2)
{
    const double xy = std::pow(std::abs(q.x() / a), 2.0 / e2) + std::pow(std::abs(q.y() / b), 2.0 / e2);
    return std::pow(xy, e2 / e1) + std::pow(std::abs(q.z() / c), 2.0 / e1);
}

} // namespace

AnalyticPrimitive::AnalyticPrimitive(PrimitiveKind kind, std::vector<double> params, Vec3 offset)
    : kind_(kind), params_(std::move(params)), offset_(std::move(offset))
{
    if (params_.size() != expected_params(kind_))
        throw FormatError(to_string(kind_) + ": expected " + std::to_string(expected_params(kind_)) +
                          " parameters, got " + std::to_string(params_.size()));
    for (double v : params_)
        if (!(v > 0.0) || !std::isfinite(v))
            throw FormatError(to_string(kind_) + ": parameters must be positive and finite");
    if (kind_ == PrimitiveKind::Torus && params_[1] >= params_[0])
        throw FormatError("torus: minor radius must be below major radius");
}

double AnalyticPrimitive::eval(const Vec3& p) const
{
    const Vec3 q = p - offset_;
    switch (kind_) {
    case PrimitiveKind::Sphere:
        return q.norm() - params_[0];
    case PrimitiveKind::Box: {
        const Vec3 d = q.cwiseAbs() - Vec3(params_[0], params_[1], params_[2]);
        return d.cwiseMax(0.0).norm() + std::min(d.maxCoeff(), 0.0);
    }
    case PrimitiveKind::Torus: {
        const double ring = std::hypot(q.x(), q.y()) - params_[0];
        return std::hypot(ring, q.z()) - params_[1];
    }
    case PrimitiveKind::Capsule: {
        const double h = params_[0];
        const Vec3 r(q.x(), q.y(), q.z() - std::clamp(q.z(), -h, h));
        return r.norm() - params_[1];
    }
    case PrimitiveKind::Superquadric: {
        const double rn = q.norm();
        const double a = params_[0], b = params_[1], c = params_[2];
        if (rn == 0.0)
            return -std::min({a, b, c});
        const double g = superquadric_inside_outside(q, a, b, c, params_[3], params_[4]);
        return rn * (1.0 - std::pow(g, -params_[3] / 2.0));
    }
    }
    return 0.0;
}

Vec3 AnalyticPrimitive::gradient(const Vec3& p) const
{
    const Vec3 q = p - offset_;
    switch (kind_) {
    case PrimitiveKind::Sphere: {
        const double n = q.norm();
        return n > 0.0 ? Vec3(q / n) : Vec3::Zero();
    }
    case PrimitiveKind::Box: {
        const Vec3 half(params_[0], params_[1], params_[2]);
        const Vec3 d = q.cwiseAbs() - half;
        const Vec3 sign = q.unaryExpr([](double v) { return v < 0.0 ? -1.0 : 1.0; });
        if (d.maxCoeff() > 0.0) {
            const Vec3 out = d.cwiseMax(0.0);
            return sign.cwiseProduct(out) / out.norm();
        }
        Eigen::Index axis = 0;
        d.maxCoeff(&axis);
        Vec3 g = Vec3::Zero();
        g[axis] = sign[axis];
        return g;
    }
    case PrimitiveKind::Torus: {
        const double rho = std::hypot(q.x(), q.y());
        const double ring = rho - params_[0];
        const double len = std::hypot(ring, q.z());
        if (len == 0.0)
            return Vec3::Zero();
        const double cx = rho > 0.0 ? q.x() / rho : 1.0;
        const double cy = rho > 0.0 ? q.y() / rho : 0.0;
        return Vec3(ring * cx, ring * cy, q.z()) / len;
    }
    case PrimitiveKind::Capsule: {
        const double h = params_[0];
        const Vec3 r(q.x(), q.y(), q.z() - std::clamp(q.z(), -h, h));
        const double n = r.norm();
        return n > 0.0 ? Vec3(r / n) : Vec3::Zero();
    }
    case PrimitiveKind::Superquadric:
        return central_difference_gradient(*this, p, kFdStep);
    }
    return Vec3::Zero();
}

Aabb AnalyticPrimitive::bounds() const
{
    Vec3 half;
    switch (kind_) {
    case PrimitiveKind::Sphere: half.setConstant(params_[0]); break;
    case PrimitiveKind::Box: half = Vec3(params_[0], params_[1], params_[2]); break;
    case PrimitiveKind::Torus:
        half = Vec3(params_[0] + params_[1], params_[0] + params_[1], params_[1]);
        break;
    case PrimitiveKind::Capsule:
        half = Vec3(params_[1], params_[1], params_[0] + params_[1]);
        break;
    case PrimitiveKind::Superquadric: half = Vec3(params_[0], params_[1], params_[2]); break;
    }
    const Aabb tight{offset_ - half, offset_ + half};
    return tight.padded(0.1 * half.maxCoeff());
}

FieldPtr make_sphere(double radius, const Vec3& offset)
{
    return std::make_shared<AnalyticPrimitive>(PrimitiveKind::Sphere, std::vector<double>{radius}, offset);
}

FieldPtr make_box(const Vec3& half_extents, const Vec3& offset)
{
    return std::make_shared<AnalyticPrimitive>(
        PrimitiveKind::Box, std::vector<double>{half_extents.x(), half_extents.y(), half_extents.z()},
        offset);
}

FieldPtr make_torus(double major_radius, double minor_radius, const Vec3& offset)
{
    return std::make_shared<AnalyticPrimitive>(PrimitiveKind::Torus,
                                               std::vector<double>{major_radius, minor_radius}, offset);
}

FieldPtr make_capsule(double half_length, double radius, const Vec3& offset)
{
    return std::make_shared<AnalyticPrimitive>(PrimitiveKind::Capsule,
                                               std::vector<double>{half_length, radius}, offset);
}

FieldPtr make_superquadric(const Vec3& radii, double eps1, double eps2, const Vec3& offset)
{
    return std::make_shared<AnalyticPrimitive>(
        PrimitiveKind::Superquadric, std::vector<double>{radii.x(), radii.y(), radii.z(), eps1, eps2},
        offset);
}

UnionField::UnionField(std::vector<FieldPtr> children, double smoothness)
    : children_(std::move(children)), k_(smoothness)
{
    if (children_.empty())
        throw FormatError("union: needs at least one child");
    if (k_ < 0.0)
        throw FormatError("union: smoothness must be non-negative");
}

// Quadratic smooth-min: for |a - b| < k,
//   smin = min(a, b) - k h^2 / 4,  h = (k - |a - b|) / k,
// with d smin/d max(a,b) = h / 2 and d smin/d min(a,b) = 1 - h / 2.
double UnionField::eval(const Vec3& p) const
{
    double acc = children_.front()->eval(p);
    for (std::size_t i = 1; i < children_.size(); ++i) {
        const double b = children_[i]->eval(p);
        if (k_ > 0.0) {
            const double h = std::max(k_ - std::abs(acc - b), 0.0) / k_;
            acc = std::min(acc, b) - k_ * h * h / 4.0;
        } else {
            acc = std::min(acc, b);
        }
    }
    return acc;
}

Vec3 UnionField::gradient(const Vec3& p) const
{
    double acc = children_.front()->eval(p);
    Vec3 grad = children_.front()->gradient(p);
    for (std::size_t i = 1; i < children_.size(); ++i) {
        const double b = children_[i]->eval(p);
        const Vec3 gb = children_[i]->gradient(p);
        const double h = k_ > 0.0 ? std::max(k_ - std::abs(acc - b), 0.0) / k_ : 0.0;
        const double w_small = 1.0 - h / 2.0;
        const double w_large = h / 2.0;
        if (acc <= b)
            grad = w_small * grad + w_large * gb;
        else
            grad = w_small * gb + w_large * grad;
        acc = std::min(acc, b) - k_ * h * h / 4.0;
    }
    return grad;
}

Aabb UnionField::bounds() const
{
    Aabb box = children_.front()->bounds();
    for (std::size_t i = 1; i < children_.size(); ++i)
        box = box.merged(children_[i]->bounds());
    return box;
}

FieldPtr make_union(std::vector<FieldPtr> children, double smoothness)
{
    return std::make_shared<UnionField>(std::move(children), smoothness);
}

PointCloud sample_surface(const SdfField& field, std::size_t n, std::uint64_t seed,
                          const SurfaceSampling& opts)
{
    if (n == 0)
        throw FormatError("sample_surface: n must be at least 1");
    const Aabb box = field.bounds();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    const std::size_t batch = std::max<std::size_t>(2 * n, 256);
    PointCloud out(3, static_cast<Eigen::Index>(n));
    std::size_t found = 0;
    for (int b = 0; b < opts.max_batches && found < n; ++b) {
        PointCloud seeds(3, static_cast<Eigen::Index>(batch));
        for (Eigen::Index i = 0; i < seeds.cols(); ++i)
            for (int a = 0; a < 3; ++a)
                seeds(a, i) = box.lo[a] + u01(rng) * (box.hi[a] - box.lo[a]);
        const auto ok = kernels::project_to_surface(field, seeds, opts.tol, opts.max_newton_steps);
        for (Eigen::Index i = 0; i < seeds.cols() && found < n; ++i)
            if (ok[static_cast<std::size_t>(i)])
                out.col(static_cast<Eigen::Index>(found++)) = seeds.col(i);
    }
    if (found < n)
        throw SurfaceNotFound("sample_surface: only " + std::to_string(found) + " of " +
                              std::to_string(n) + " seeds reached the zero level set");
    return out;
}

double bounding_box_diameter(const SdfField& field, std::size_t samples, std::uint64_t seed)
{
    const PointCloud pts = sample_surface(field, std::max<std::size_t>(samples, 1000), seed);
    return (pts.rowwise().maxCoeff() - pts.rowwise().minCoeff()).norm();
}

} // namespace crisp
