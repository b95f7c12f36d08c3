#include "crisp/geometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <unordered_map>

namespace crisp {

PointCloud Pose::apply(const PointCloud& pts) const
{
    return (rotation * pts).colwise() + translation;
}

Pose Pose::inverse() const
{
    Pose out;
    out.rotation = rotation.transpose();
    out.translation = -(out.rotation * translation);
    out.chain = chain;
    return out;
}

Pose Pose::compose(const Pose& rhs) const
{
    Pose out;
    out.rotation = rotation * rhs.rotation;
    out.translation = rotation * rhs.translation + translation;
    out.chain = chain + rhs.chain + 1;
    if (out.chain > kMaxChain)
        return out.orthonormalized();
    return out;
}

namespace {

Mat3 nearest_rotation(const Mat3& m)
{
    Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 d = Mat3::Identity();
    d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    return svd.matrixU() * d * svd.matrixV().transpose();
}

Vec3 vee(const Mat3& m) { return {m(2, 1), m(0, 2), m(1, 0)}; }

struct CenteredPair {
    Vec3 x_mean, z_mean;
    Mat3 cross;      // sum (x_i - x_mean)(z_i - z_mean)^T
    double x_spread; // sum ||x_i - x_mean||^2
};

CenteredPair center(const PointCloud& x, const PointCloud& z)
{
    if (x.cols() != z.cols())
        throw DegenerateConfiguration("alignment: point sets differ in size (" +
                                      std::to_string(x.cols()) + " vs " + std::to_string(z.cols()) + ")");
    if (x.cols() < 3)
        throw DegenerateConfiguration("alignment: need at least 3 correspondences");
    CenteredPair c;
    c.x_mean = x.rowwise().mean();
    c.z_mean = z.rowwise().mean();
    const PointCloud xc = x.colwise() - c.x_mean;
    const PointCloud zc = z.colwise() - c.z_mean;
    c.cross = xc * zc.transpose();
    c.x_spread = xc.squaredNorm();
    return c;
}

struct Procrustes {
    Mat3 rotation;
    double trace_sd; // trace(S D)
};

// H = U S V^T  ->  R = V D U^T with D fixing det(R) = +1.
Procrustes solve_rotation(const Mat3& cross)
{
    Eigen::JacobiSVD<Mat3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec3 s = svd.singularValues();
    if (!(s[0] > 0.0) || s[1] <= 1e-12 * s[0])
        throw DegenerateConfiguration("alignment: cross covariance has rank < 2 (collinear points)");
    const Mat3& u = svd.matrixU();
    const Mat3& v = svd.matrixV();
    Mat3 d = Mat3::Identity();
    if ((v * u.transpose()).determinant() < 0.0)
        d(2, 2) = -1.0;
    return {v * d * u.transpose(), s[0] + s[1] + d(2, 2) * s[2]};
}

} // namespace

Pose Pose::orthonormalized() const
{
    Pose out = *this;
    out.rotation = nearest_rotation(rotation);
    out.chain = 0;
    return out;
}

PointCloud SimPose::apply(const PointCloud& pts) const
{
    return ((scale * rotation) * pts).colwise() + translation;
}

Mat3 hat(const Vec3& w)
{
    Mat3 m;
    m << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
    return m;
}

Mat3 exp_so3(const Vec3& omega)
{
    const double theta = omega.norm();
    const Mat3 w = hat(omega);
    if (theta < 1e-8)
        return Mat3::Identity() + w + 0.5 * w * w;
    return Mat3::Identity() + (std::sin(theta) / theta) * w +
           ((1.0 - std::cos(theta)) / (theta * theta)) * w * w;
}

Vec3 log_so3(const Mat3& r)
{
    const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
    const double theta = std::acos(c);
    const Vec3 anti = vee(r - r.transpose()); // 2 sin(theta) u
    if (theta < 1e-7)
        return 0.5 * anti;
    if (std::numbers::pi - theta > 1e-4)
        return (theta / (2.0 * std::sin(theta))) * anti;
    // Near pi the antisymmetric part vanishes; read the axis off the symmetric
    // part (1 - cos theta) u u^T and take the sign from what remains of `anti`.
    const Mat3 uut = (0.5 * (r + r.transpose()) - c * Mat3::Identity()) / (1.0 - c);
    Eigen::Index k = 0;
    uut.diagonal().maxCoeff(&k);
    Vec3 u = uut.col(k) / std::sqrt(std::max(uut(k, k), 1e-300));
    u.normalize();
    if (u.dot(anti) < 0.0)
        u = -u;
    return theta * u;
}

namespace {

Mat3 left_jacobian(const Vec3& omega)
{
    const double theta = omega.norm();
    const Mat3 w = hat(omega);
    if (theta < 1e-8)
        return Mat3::Identity() + 0.5 * w + (1.0 / 6.0) * w * w;
    const double t2 = theta * theta;
    return Mat3::Identity() + ((1.0 - std::cos(theta)) / t2) * w +
           ((theta - std::sin(theta)) / (t2 * theta)) * w * w;
}

} // namespace

Pose exp_se3(const Twist& xi)
{
    Pose p;
    p.rotation = exp_so3(xi.omega);
    p.translation = left_jacobian(xi.omega) * xi.v;
    return p;
}

Twist log_se3(const Pose& pose)
{
    Twist xi;
    xi.omega = log_so3(pose.rotation);
    xi.v = left_jacobian(xi.omega).partialPivLu().solve(pose.translation);
    return xi;
}

Pose arun_fit(const PointCloud& x, const PointCloud& z)
{
    const CenteredPair c = center(x, z);
    Pose p;
    p.rotation = solve_rotation(c.cross).rotation;
    p.translation = c.z_mean - p.rotation * c.x_mean;
    return p;
}

SimPose umeyama_fit(const PointCloud& x, const PointCloud& z)
{
    const CenteredPair c = center(x, z);
    const Procrustes sol = solve_rotation(c.cross);
    SimPose p;
    p.rotation = sol.rotation;
    p.scale = sol.trace_sd / c.x_spread;
    p.translation = c.z_mean - p.scale * (p.rotation * c.x_mean);
    return p;
}

double alignment_residual(const Pose& pose, const PointCloud& x, const PointCloud& z)
{
    return (pose.apply(x) - z).squaredNorm();
}

double alignment_residual(const SimPose& pose, const PointCloud& x, const PointCloud& z)
{
    return (pose.apply(x) - z).squaredNorm();
}

double rotation_error_deg(const Mat3& a, const Mat3& b)
{
    const double c = std::clamp(((a * b.transpose()).trace() - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c) * 180.0 / std::numbers::pi;
}

Eigen::VectorXd hashed_nearest_distances(const PointCloud& query, const PointCloud& ref)
{
    using Key = std::array<std::int64_t, 3>;
    struct KeyHash {
        std::size_t operator()(const Key& k) const
        {
            std::uint64_t h = 1469598103934665603ULL;
            for (auto v : k) {
                h ^= static_cast<std::uint64_t>(v);
                h *= 1099511628211ULL;
            }
            return static_cast<std::size_t>(h);
        }
    };

    const Vec3 lo = ref.rowwise().minCoeff();
    const Vec3 hi = ref.rowwise().maxCoeff();
    const double n = static_cast<double>(ref.cols());
    const double cell = std::max((hi - lo).maxCoeff() / std::max(std::cbrt(n), 1.0), 1e-9);
    auto key_of = [&](const Vec3& p) {
        return Key{static_cast<std::int64_t>(std::floor((p.x() - lo.x()) / cell)),
                   static_cast<std::int64_t>(std::floor((p.y() - lo.y()) / cell)),
                   static_cast<std::int64_t>(std::floor((p.z() - lo.z()) / cell))};
    };
    std::unordered_map<Key, std::vector<Eigen::Index>, KeyHash> grid;
    for (Eigen::Index j = 0; j < ref.cols(); ++j)
        grid[key_of(ref.col(j))].push_back(j);
    const double span_cells = std::ceil((hi - lo).maxCoeff() / cell);

    Eigen::VectorXd out(query.cols());
#pragma omp parallel for schedule(dynamic, 64)
    for (Eigen::Index i = 0; i < query.cols(); ++i) {
        const Vec3 q = query.col(i);
        const Key c = key_of(q);
        const double outside = (q - q.cwiseMax(lo).cwiseMin(hi)).norm();
        const auto ring_limit = static_cast<std::int64_t>(std::ceil(outside / cell) + span_cells) + 2;
        double best = std::numeric_limits<double>::infinity();
        for (std::int64_t r = 0;; ++r) {
            for (std::int64_t dx = -r; dx <= r; ++dx)
                for (std::int64_t dy = -r; dy <= r; ++dy)
                    for (std::int64_t dz = -r; dz <= r; ++dz) {
                        if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r)
                            continue;
                        auto it = grid.find(Key{c[0] + dx, c[1] + dy, c[2] + dz});
                        if (it == grid.end())
                            continue;
                        for (auto j : it->second)
                            best = std::min(best, (ref.col(j) - q).norm());
                    }
            // Cells in ring r + 1 are at least r * cell away.
            if (best <= static_cast<double>(r) * cell || r > ring_limit)
                break;
        }
        out[i] = best;
    }
    return out;
}

double adds_metric(const Pose& pose_est, const Pose& pose_gt, const PointCloud& model)
{
    if (model.cols() == 0)
        throw Error("adds_metric: empty model");
    const PointCloud a = pose_est.apply(model);
    const PointCloud b = pose_gt.apply(model);
    const Eigen::VectorXd d = model.cols() <= kAddsExhaustiveLimit
                                  ? kernels::nearest_distances(a, b, Norm::L2)
                                  : hashed_nearest_distances(a, b);
    return d.mean();
}

double chamfer(const PointCloud& a, const PointCloud& b, Norm norm)
{
    if (a.cols() == 0 || b.cols() == 0)
        throw Error("chamfer: empty point set");
    const double ab = kernels::nearest_distances(a, b, norm).mean();
    const double ba = kernels::nearest_distances(b, a, norm).mean();
    return 0.5 * (ab + ba);
}

void write_cloud_csv(const std::filesystem::path& path, const PointCloud& pts)
{
    std::ofstream os(path);
    if (!os)
        throw FormatError("cannot open " + path.string() + " for writing");
    os.precision(17);
    os << "x,y,z\n";
    for (Eigen::Index i = 0; i < pts.cols(); ++i)
        os << pts(0, i) << ',' << pts(1, i) << ',' << pts(2, i) << '\n';
}

PointCloud read_cloud_csv(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is)
        throw FormatError("cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) || line != "x,y,z")
        throw FormatError(path.string() + ": expected header 'x,y,z'");
    std::vector<Vec3> pts;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty())
            continue;
        std::istringstream ss(line);
        Vec3 p;
        char c1 = 0, c2 = 0;
        if (!(ss >> p.x() >> c1 >> p.y() >> c2 >> p.z()) || c1 != ',' || c2 != ',')
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed row");
        pts.push_back(p);
    }
    return to_cloud(pts);
}

} // namespace crisp
