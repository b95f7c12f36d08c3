#include "crisp/kernels.hpp"

#include "crisp/shape_model.hpp"

#include <cmath>
#include <limits>

namespace crisp::kernels {

bool project_point(const SdfField& field, Vec3& p, double tol, int max_steps)
{
    for (int s = 0; s < max_steps; ++s) {
        const double v = field.eval(p);
        if (std::abs(v) < tol)
            return true;
        const Vec3 g = field.gradient(p);
        const double gg = g.squaredNorm();
        if (!(gg > 1e-20) || !std::isfinite(v))
            return false;
        p -= (v / gg) * g;
    }
    return std::abs(field.eval(p)) < tol;
}

namespace {

inline double norm_of(const Vec3& d, Norm norm)
{
    return norm == Norm::L2 ? d.norm() : d.lpNorm<1>();
}

inline double nearest(const Vec3& q, const PointCloud& ref, Norm norm)
{
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < ref.cols(); ++j)
        best = std::min(best, norm_of(ref.col(j) - q, norm));
    return best;
}

inline Vec3 lattice_point(const Aabb& b, const std::array<std::uint32_t, 3>& res, std::uint32_t i,
                          std::uint32_t j, std::uint32_t k)
{
    const Vec3 t(static_cast<double>(i) / (res[0] - 1), static_cast<double>(j) / (res[1] - 1),
                 static_cast<double>(k) / (res[2] - 1));
    return b.lo + t.cwiseProduct(b.hi - b.lo);
}

// Per-point term of the pose objective: value f^2 and its left-twist gradient
// (2 f (y x grad f), 2 f grad f) with y = R x + t.
inline void pose_term(const SdfField& field, const Vec3& y, bool with_gradient, double* out)
{
    const double f = field.eval(y);
    out[0] = f * f;
    if (with_gradient) {
        const Vec3 g = field.gradient(y);
        const Vec3 w = 2.0 * f * y.cross(g);
        const Vec3 v = 2.0 * f * g;
        for (int a = 0; a < 3; ++a) {
            out[1 + a] = w[a];
            out[4 + a] = v[a];
        }
    }
}

PoseObjective sum_pose_terms(const Eigen::Matrix<double, 7, Eigen::Dynamic>& terms)
{
    PoseObjective out;
    for (Eigen::Index i = 0; i < terms.cols(); ++i) {
        out.value += terms(0, i);
        out.grad += terms.col(i).tail<6>();
    }
    return out;
}

struct CodeContext {
    const ShapeBasis& basis;
    Eigen::VectorXd w;
    Eigen::MatrixXd jac_t;
};

CodeContext code_context(const Decoder& decoder, const Eigen::VectorXd& alpha, bool with_gradient)
{
    CodeContext ctx{decoder.basis(), decoder.weights(alpha), {}};
    if (with_gradient)
        ctx.jac_t = decoder.weight_jacobian(alpha).transpose();
    return ctx;
}

// Column layout: [f^2, d(f^2)/d alpha].
inline void code_term(const CodeContext& ctx, const Vec3& z, bool with_gradient, double* out)
{
    const Eigen::Index k = ctx.w.size();
    Eigen::VectorXd fk(k);
    double f = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
        if (!with_gradient && ctx.w[j] == 0.0) {
            fk[j] = 0.0;
            continue;
        }
        fk[j] = ctx.basis.fields[static_cast<std::size_t>(j)]->eval(z);
        f += ctx.w[j] * fk[j];
    }
    out[0] = f * f;
    if (with_gradient) {
        const Eigen::VectorXd g = (2.0 * f) * (ctx.jac_t * fk);
        for (Eigen::Index j = 0; j < k; ++j)
            out[1 + j] = g[j];
    }
}

CodeObjective sum_code_terms(const Eigen::MatrixXd& terms, Eigen::Index k)
{
    CodeObjective out;
    out.grad = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < terms.cols(); ++i) {
        out.value += terms(0, i);
        out.grad += terms.col(i).tail(k);
    }
    return out;
}

} // namespace

// ---------------------------------------------------------------- parallel

Eigen::VectorXd eval_batch(const SdfField& field, const PointCloud& pts)
{
    Eigen::VectorXd out(pts.cols());
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < pts.cols(); ++i)
        out[i] = field.eval(pts.col(i));
    return out;
}

Eigen::MatrixXd field_matrix(const PointCloud& pts, std::span<const SdfField* const> columns)
{
    const auto m = static_cast<Eigen::Index>(columns.size());
    Eigen::MatrixXd out(pts.cols(), m);
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < pts.cols(); ++i)
        for (Eigen::Index j = 0; j < m; ++j)
            out(i, j) = columns[static_cast<std::size_t>(j)]->eval(pts.col(i));
    return out;
}

std::vector<std::uint8_t> project_to_surface(const SdfField& field, PointCloud& pts, double tol,
                                             int max_steps)
{
    std::vector<std::uint8_t> ok(static_cast<std::size_t>(pts.cols()));
#pragma omp parallel for schedule(dynamic, 32)
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
        Vec3 p = pts.col(i);
        ok[static_cast<std::size_t>(i)] = project_point(field, p, tol, max_steps) ? 1 : 0;
        pts.col(i) = p;
    }
    return ok;
}

std::vector<float> bake_grid(const SdfField& field, const Aabb& bounds,
                             const std::array<std::uint32_t, 3>& res)
{
    std::vector<float> values(static_cast<std::size_t>(res[0]) * res[1] * res[2]);
    const auto slices = static_cast<std::int64_t>(res[2]);
#pragma omp parallel for schedule(static)
    for (std::int64_t k = 0; k < slices; ++k)
        for (std::uint32_t j = 0; j < res[1]; ++j)
            for (std::uint32_t i = 0; i < res[0]; ++i) {
                const auto kk = static_cast<std::uint32_t>(k);
                values[i + res[0] * (j + static_cast<std::size_t>(res[1]) * kk)] =
                    static_cast<float>(field.eval(lattice_point(bounds, res, i, j, kk)));
            }
    return values;
}

Eigen::VectorXd nearest_distances(const PointCloud& query, const PointCloud& ref, Norm norm)
{
    Eigen::VectorXd out(query.cols());
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < query.cols(); ++i)
        out[i] = nearest(query.col(i), ref, norm);
    return out;
}

PoseObjective pose_objective(const SdfField& field, const PointCloud& x, const Mat3& rotation,
                             const Vec3& translation, bool with_gradient)
{
    Eigen::Matrix<double, 7, Eigen::Dynamic> terms = Eigen::Matrix<double, 7, Eigen::Dynamic>::Zero(7, x.cols());
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < x.cols(); ++i)
        pose_term(field, rotation * x.col(i) + translation, with_gradient, terms.col(i).data());
    return sum_pose_terms(terms);
}

CodeObjective code_objective(const Decoder& decoder, const PointCloud& z, const Eigen::VectorXd& alpha,
                             bool with_gradient)
{
    const CodeContext ctx = code_context(decoder, alpha, with_gradient);
    const Eigen::Index k = alpha.size();
    Eigen::MatrixXd terms = Eigen::MatrixXd::Zero(k + 1, z.cols());
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < z.cols(); ++i)
        code_term(ctx, z.col(i), with_gradient, terms.col(i).data());
    return sum_code_terms(terms, k);
}

// ---------------------------------------------------------------- serial

namespace serial {

Eigen::VectorXd eval_batch(const SdfField& field, const PointCloud& pts)
{
    Eigen::VectorXd out(pts.cols());
    for (Eigen::Index i = 0; i < pts.cols(); ++i)
        out[i] = field.eval(pts.col(i));
    return out;
}

Eigen::MatrixXd field_matrix(const PointCloud& pts, std::span<const SdfField* const> columns)
{
    const auto m = static_cast<Eigen::Index>(columns.size());
    Eigen::MatrixXd out(pts.cols(), m);
    for (Eigen::Index i = 0; i < pts.cols(); ++i)
        for (Eigen::Index j = 0; j < m; ++j)
            out(i, j) = columns[static_cast<std::size_t>(j)]->eval(pts.col(i));
    return out;
}

std::vector<std::uint8_t> project_to_surface(const SdfField& field, PointCloud& pts, double tol,
                                             int max_steps)
{
    std::vector<std::uint8_t> ok(static_cast<std::size_t>(pts.cols()));
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
        Vec3 p = pts.col(i);
        ok[static_cast<std::size_t>(i)] = project_point(field, p, tol, max_steps) ? 1 : 0;
        pts.col(i) = p;
    }
    return ok;
}

std::vector<float> bake_grid(const SdfField& field, const Aabb& bounds,
                             const std::array<std::uint32_t, 3>& res)
{
    std::vector<float> values;
    values.reserve(static_cast<std::size_t>(res[0]) * res[1] * res[2]);
    for (std::uint32_t k = 0; k < res[2]; ++k)
        for (std::uint32_t j = 0; j < res[1]; ++j)
            for (std::uint32_t i = 0; i < res[0]; ++i)
                values.push_back(static_cast<float>(field.eval(lattice_point(bounds, res, i, j, k))));
    return values;
}

Eigen::VectorXd nearest_distances(const PointCloud& query, const PointCloud& ref, Norm norm)
{
    Eigen::VectorXd out(query.cols());
    for (Eigen::Index i = 0; i < query.cols(); ++i)
        out[i] = nearest(query.col(i), ref, norm);
    return out;
}

PoseObjective pose_objective(const SdfField& field, const PointCloud& x, const Mat3& rotation,
                             const Vec3& translation, bool with_gradient)
{
    Eigen::Matrix<double, 7, Eigen::Dynamic> terms = Eigen::Matrix<double, 7, Eigen::Dynamic>::Zero(7, x.cols());
    for (Eigen::Index i = 0; i < x.cols(); ++i)
        pose_term(field, rotation * x.col(i) + translation, with_gradient, terms.col(i).data());
    return sum_pose_terms(terms);
}

CodeObjective code_objective(const Decoder& decoder, const PointCloud& z, const Eigen::VectorXd& alpha,
                             bool with_gradient)
{
    const CodeContext ctx = code_context(decoder, alpha, with_gradient);
    const Eigen::Index k = alpha.size();
    Eigen::MatrixXd terms = Eigen::MatrixXd::Zero(k + 1, z.cols());
    for (Eigen::Index i = 0; i < z.cols(); ++i)
        code_term(ctx, z.col(i), with_gradient, terms.col(i).data());
    return sum_code_terms(terms, k);
}

} // namespace serial
} // namespace crisp::kernels
