#include "crisp/simulator.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace crisp {

namespace {

Vec3 random_unit(std::mt19937_64& rng)
{
    std::normal_distribution<double> n01(0.0, 1.0);
    for (;;) {
        const Vec3 v(n01(rng), n01(rng), n01(rng));
        const double len = v.norm();
        if (len > 1e-12)
            return v / len;
    }
}

// Camera axes expressed in the object frame; the camera z axis looks at the
// object origin from `dir`.
Mat3 look_at_origin(const Vec3& dir, std::mt19937_64& rng)
{
    const Vec3 z = -dir.normalized();
    Vec3 x;
    do {
        x = random_unit(rng).cross(z);
    } while (x.norm() < 1e-6);
    x.normalize();
    Mat3 r;
    r.col(0) = x;
    r.col(1) = z.cross(x);
    r.col(2) = z;
    return r;
}

PointCloud visible_surface(const SdfField& field, const Vec3& camera, int n, bool cull, std::mt19937_64& rng)
{
    PointCloud out(3, n);
    int found = 0;
    const auto batch = static_cast<std::size_t>(std::max(4 * n, 512));
    // Tight enough that the ground truth zeroes the objective to round-off.
    SurfaceSampling tight;
    tight.tol = 1e-12;
    for (int attempt = 0; attempt < 20 && found < n; ++attempt) {
        const PointCloud pts = sample_surface(field, batch, rng(), tight);
        for (Eigen::Index i = 0; i < pts.cols() && found < n; ++i) {
            const Vec3 p = pts.col(i);
            if (!cull || field.gradient(p).dot(camera - p) > 0.0)
                out.col(found++) = p;
        }
    }
    if (found < n)
        throw SurfaceNotFound("make_scene: only " + std::to_string(found) + " visible points");
    return out;
}

} // namespace

void SceneConfig::validate() const
{
    if (n_points < 3)
        throw Error("scene: n_points must be at least 3");
    if (n_views < 1)
        throw Error("scene: n_views must be at least 1");
    if (!(noise_sigma >= 0.0))
        throw Error("scene: noise_sigma must be non-negative");
    if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0))
        throw Error("scene: outlier_fraction must lie in [0, 1)");
    if (n_points - static_cast<int>(std::lround(outlier_fraction * n_points)) < 3)
        throw Error("scene: fewer than 3 inliers per view");
    if (!(outlier_radius > 0.0))
        throw Error("scene: outlier_radius must be positive");
    if (!(min_distance > 0.0 && max_distance >= min_distance))
        throw Error("scene: need 0 < min_distance <= max_distance");
    if (!view_directions.empty() && static_cast<int>(view_directions.size()) != n_views)
        throw Error("scene: view_directions must list one direction per view");
    for (const auto& d : view_directions)
        if (!(d.norm() > 0.0) || !d.allFinite())
            throw Error("scene: view directions must be non-zero");
    if (gt_alpha && !gt_alpha->on_simplex())
        throw Error("scene: gt_alpha must lie on the simplex");
}

std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t sub)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      static_cast<std::uint32_t>(sub), static_cast<std::uint32_t>(sub >> 32)};
    return std::mt19937_64(seq);
}

LatentCode sample_simplex(Eigen::Index dim, std::mt19937_64& rng)
{
    std::exponential_distribution<double> e(1.0);
    Eigen::VectorXd a(dim);
    for (Eigen::Index i = 0; i < dim; ++i)
        a[i] = e(rng);
    return {project_simplex(a / a.sum())};
}

Mat3 random_rotation(std::mt19937_64& rng)
{
    std::normal_distribution<double> n01(0.0, 1.0);
    Eigen::Quaterniond q(n01(rng), n01(rng), n01(rng), n01(rng));
    q.normalize();
    return q.toRotationMatrix();
}

Mat3 axis_angle(const Vec3& axis, double angle)
{
    return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

Scene make_scene(const Decoder& decoder, const SceneConfig& cfg, int object_id)
{
    cfg.validate();
    const auto obj = static_cast<std::uint64_t>(object_id);
    std::mt19937_64 rng = derived_rng(cfg.seed, obj);

    Scene scene;
    scene.object_id = object_id;
    scene.gt_alpha = cfg.gt_alpha ? *cfg.gt_alpha : sample_simplex(decoder.dim(), rng);
    if (scene.gt_alpha.dim() != decoder.dim())
        throw Error("scene: gt_alpha dimension does not match the basis");
    const FieldPtr field = decoder.decode(scene.gt_alpha);

    for (int v = 0; v < cfg.n_views; ++v) {
        std::mt19937_64 vr = derived_rng(cfg.seed, obj, static_cast<std::uint64_t>(v) + 1);
        const Vec3 dir = cfg.view_directions.empty() ? random_unit(vr)
                                                     : cfg.view_directions[static_cast<std::size_t>(v)].normalized();
        std::uniform_real_distribution<double> dist(cfg.min_distance, cfg.max_distance);
        const Vec3 camera = dist(vr) * dir;

        Frame f;
        f.object_id = object_id;
        f.view_id = v;
        f.gt_alpha = scene.gt_alpha;
        f.gt_pose.rotation = look_at_origin(dir, vr);
        f.gt_pose.translation = camera;

        const PointCloud surface = visible_surface(*field, camera, cfg.n_points, cfg.hemisphere_culling, vr);
        f.x_clean = f.gt_pose.inverse().apply(surface);
        f.x = f.x_clean;
        if (cfg.noise_sigma > 0.0) {
            std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
            for (Eigen::Index i = 0; i < f.x.cols(); ++i)
                for (int a = 0; a < 3; ++a)
                    f.x(a, i) += noise(vr);
        }

        const auto n_out = static_cast<int>(std::lround(cfg.outlier_fraction * cfg.n_points));
        if (n_out > 0) {
            std::vector<int> idx(static_cast<std::size_t>(cfg.n_points));
            std::iota(idx.begin(), idx.end(), 0);
            for (int i = 0; i < n_out; ++i) {
                std::uniform_int_distribution<int> pick(i, cfg.n_points - 1);
                std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(vr))]);
            }
            f.outlier_indices.assign(idx.begin(), idx.begin() + n_out);
            std::sort(f.outlier_indices.begin(), f.outlier_indices.end());
            const Vec3 centroid = f.x.rowwise().mean();
            std::uniform_real_distribution<double> u01(0.0, 1.0);
            for (int i : f.outlier_indices)
                f.x.col(i) = centroid + cfg.outlier_radius * std::cbrt(u01(vr)) * random_unit(vr);
        }
        f.gt_z = f.gt_pose.apply(f.x);
        scene.frames.push_back(std::move(f));
    }
    return scene;
}

Estimate synth_estimates(const Frame& frame, const PerturbationModel& pm)
{
    const auto obj = static_cast<std::uint64_t>(frame.object_id);
    std::mt19937_64 vr = derived_rng(pm.seed, obj, static_cast<std::uint64_t>(frame.view_id) + 1);

    Estimate est;
    const Vec3 axis = random_unit(vr);
    const Vec3 shift = random_unit(vr);
    est.delta.rotation = axis_angle(axis, pm.rotation_deg * std::numbers::pi / 180.0);
    est.delta.translation = pm.translation_m * shift;
    est.z = est.delta.apply(frame.gt_z);
    if (pm.z_noise_sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, pm.z_noise_sigma);
        for (Eigen::Index i = 0; i < est.z.cols(); ++i)
            for (int a = 0; a < 3; ++a)
                est.z(a, i) += noise(vr);
    }

    // The code stream is per object so every view reports the same code.
    std::mt19937_64 cr = derived_rng(pm.seed, obj, 0);
    const Eigen::Index k = frame.gt_alpha.dim();
    Eigen::VectorXd offset = Eigen::VectorXd::Zero(k);
    if (pm.code_perturb > 0.0 && k > 1) {
        std::normal_distribution<double> n01(0.0, 1.0);
        for (Eigen::Index i = 0; i < k; ++i)
            offset[i] = n01(cr);
        offset.array() -= offset.mean();
        const double l1 = offset.lpNorm<1>();
        if (l1 > 0.0)
            offset *= pm.code_perturb / l1;
    }
    est.alpha.alpha = project_simplex(frame.gt_alpha.alpha + offset);
    return est;
}

SceneEstimate synth_scene_estimates(const Scene& scene, const PerturbationModel& pm)
{
    SceneEstimate out;
    for (const auto& f : scene.frames) {
        Estimate e = synth_estimates(f, pm);
        if (out.z.empty())
            out.alpha = e.alpha;
        out.z.push_back(std::move(e.z));
    }
    return out;
}

MultiViewBuffer make_buffer(const Scene& scene, const std::vector<PointCloud>& z, std::size_t capacity)
{
    if (z.size() != scene.frames.size())
        throw Error("make_buffer: one Z per frame required");
    MultiViewBuffer buf(capacity);
    for (std::size_t i = 0; i < z.size(); ++i)
        buf.push({scene.frames[i].x, z[i]});
    return buf;
}

CorrectionResult uncorrected(const MultiViewBuffer& buffer, const LatentCode& code)
{
    CorrectionResult res;
    res.code_hat = code;
    for (const auto& v : buffer.views()) {
        res.poses.push_back(arun_fit(v.x, v.z));
        res.z_hat.push_back(v.z);
    }
    return res;
}

MetricsRecord evaluate(const CorrectionResult& result, const Scene& scene, const Decoder& decoder,
                       const EvaluationOptions& opts)
{
    if (result.poses.size() != scene.frames.size())
        throw Error("evaluate: result and scene differ in view count");
    const FieldPtr gt_field = decoder.decode(scene.gt_alpha);
    const FieldPtr est_field = decoder.decode(result.code_hat);
    const PointCloud model = sample_surface(*gt_field, opts.samples, opts.seed);
    const PointCloud recon = sample_surface(*est_field, opts.samples, opts.seed);

    MetricsRecord m;
    for (std::size_t v = 0; v < scene.frames.size(); ++v) {
        const Pose est = result.poses[v].inverse();
        const Pose gt = scene.frames[v].gt_pose.inverse();
        m.adds += adds_metric(est, gt, model);
        m.rotation_error_deg += rotation_error_deg(est.rotation, gt.rotation);
        m.translation_error += (est.translation - gt.translation).norm();
    }
    const auto views = static_cast<double>(scene.frames.size());
    m.adds /= views;
    m.rotation_error_deg /= views;
    m.translation_error /= views;
    m.chamfer_l1 = chamfer(recon, model, Norm::L1);
    m.chamfer_l2 = chamfer(recon, model, Norm::L2);
    m.code_error = (result.code_hat.alpha - scene.gt_alpha.alpha).norm();
    return m;
}

ShapeBasis asymmetric_basis(int k)
{
    constexpr double s = 0.02; // smooth-union blend radius
    std::vector<FieldPtr> all = {
        make_union({make_box({0.14, 0.09, 0.07}), make_sphere(0.06, {0.12, 0.07, 0.05})}, s),
        make_union({make_capsule(0.12, 0.06), make_sphere(0.07, {0.06, 0.05, 0.10})}, s),
        make_union({make_torus(0.12, 0.035), make_capsule(0.05, 0.03, {0.13, 0.04, 0.05})}, s),
        make_union({make_box({0.08, 0.10, 0.13}), make_box({0.04, 0.11, 0.03}, {0.09, 0.02, 0.12})}, s),
        make_union({make_superquadric({0.15, 0.10, 0.08}, 0.6, 0.8), make_sphere(0.05, {0.09, 0.08, 0.05})}, s),
        make_union({make_sphere(0.12), make_capsule(0.08, 0.04, {0.10, -0.05, 0.06})}, s),
        make_union({make_box({0.15, 0.06, 0.06}), make_torus(0.06, 0.02, {-0.10, 0.05, 0.05})}, s),
        make_union({make_capsule(0.10, 0.08), make_box({0.05, 0.05, 0.05}, {0.07, 0.06, -0.09})}, s),
        make_union({make_superquadric({0.10, 0.14, 0.10}, 0.9, 0.4), make_sphere(0.05, {-0.08, 0.10, 0.06})}, s),
        make_union({make_torus(0.10, 0.05), make_sphere(0.06, {0.05, -0.08, 0.07})}, s),
    };
    if (k < 1 || k > static_cast<int>(all.size()))
        throw Error("asymmetric_basis: k must lie in [1, 10]");
    all.resize(static_cast<std::size_t>(k));
    return ShapeBasis::from_fields(std::move(all));
}

ShapeBasis sphere_bump_basis()
{
    const double r = kBumpSphereRadius;
    return ShapeBasis::from_fields(
        {make_sphere(r), make_union({make_sphere(r), make_sphere(0.3 * r, {0.0, 0.0, r})}, 0.0)});
}

} // namespace crisp
