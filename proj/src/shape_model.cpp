#include "crisp/shape_model.hpp"

#include "crisp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

namespace crisp {

LatentCode LatentCode::vertex(Eigen::Index k, Eigen::Index dim)
{
    return {Eigen::VectorXd::Unit(dim, k)};
}

LatentCode LatentCode::uniform(Eigen::Index dim)
{
    return {Eigen::VectorXd::Constant(dim, 1.0 / static_cast<double>(dim))};
}

bool LatentCode::on_simplex(double tol) const
{
    return alpha.size() > 0 && alpha.allFinite() && alpha.minCoeff() >= -tol &&
           std::abs(alpha.sum() - 1.0) <= tol;
}

ShapeBasis ShapeBasis::from_fields(std::vector<FieldPtr> fields)
{
    ShapeBasis b;
    b.diameters.reserve(fields.size());
    for (const auto& f : fields)
        b.diameters.push_back(bounding_box_diameter(*f));
    b.fields = std::move(fields);
    return b;
}

Decoder::Decoder(ShapeBasis basis) : basis_(std::move(basis))
{
    if (basis_.fields.empty())
        throw Error("decoder: empty basis");
    if (basis_.diameters.size() != basis_.fields.size())
        throw Error("decoder: basis diameters do not match fields");
}

double Decoder::eval(const LatentCode& code, const Vec3& p) const
{
    const Eigen::VectorXd w = weights(code.alpha);
    double acc = 0.0;
    for (Eigen::Index k = 0; k < w.size(); ++k)
        if (w[k] != 0.0)
            acc += w[k] * basis_.fields[static_cast<std::size_t>(k)]->eval(p);
    return acc;
}

Eigen::VectorXd Decoder::grad_code(const LatentCode& code, const Vec3& p) const
{
    Eigen::VectorXd f(dim());
    for (Eigen::Index k = 0; k < dim(); ++k)
        f[k] = basis_.fields[static_cast<std::size_t>(k)]->eval(p);
    return weight_jacobian(code.alpha).transpose() * f;
}

Vec3 Decoder::grad_point(const LatentCode& code, const Vec3& p) const
{
    const Eigen::VectorXd w = weights(code.alpha);
    Vec3 g = Vec3::Zero();
    for (Eigen::Index k = 0; k < w.size(); ++k)
        if (w[k] != 0.0)
            g += w[k] * basis_.fields[static_cast<std::size_t>(k)]->gradient(p);
    return g;
}

FieldPtr Decoder::decode(const LatentCode& code) const
{
    return std::make_shared<WeightedSumField>(basis_.fields, weights(code.alpha));
}

Eigen::VectorXd LinearBlend::weights(const Eigen::VectorXd& alpha) const
{
    if (alpha.size() != dim())
        throw Error("linear blend: code has dimension " + std::to_string(alpha.size()) + ", basis " +
                    std::to_string(dim()));
    return alpha;
}

Eigen::MatrixXd LinearBlend::weight_jacobian(const Eigen::VectorXd& alpha) const
{
    return Eigen::MatrixXd::Identity(alpha.size(), alpha.size());
}

KernelBlend::KernelBlend(ShapeBasis basis, double tau) : Decoder(std::move(basis)), tau_(tau)
{
    if (!(tau_ > 0.0))
        throw Error("kernel blend: tau must be positive");
}

Eigen::VectorXd KernelBlend::weights(const Eigen::VectorXd& alpha) const
{
    if (alpha.size() != dim())
        throw Error("kernel blend: code has dimension " + std::to_string(alpha.size()) + ", basis " +
                    std::to_string(dim()));
    const Eigen::Index k = alpha.size();
    Eigen::VectorXd s(k);
    for (Eigen::Index i = 0; i < k; ++i)
        s[i] = -(alpha - Eigen::VectorXd::Unit(k, i)).squaredNorm() / tau_;
    const Eigen::VectorXd e = (s.array() - s.maxCoeff()).exp();
    return e / e.sum();
}

// d w_i / d alpha_j = (2 / tau) w_i (delta_ij - w_j)
Eigen::MatrixXd KernelBlend::weight_jacobian(const Eigen::VectorXd& alpha) const
{
    const Eigen::VectorXd w = weights(alpha);
    Eigen::MatrixXd j = -w * w.transpose();
    j.diagonal() += w;
    return (2.0 / tau_) * j;
}

WeightedSumField::WeightedSumField(std::vector<FieldPtr> fields, Eigen::VectorXd weights)
    : fields_(std::move(fields)), weights_(std::move(weights))
{
    if (static_cast<Eigen::Index>(fields_.size()) != weights_.size())
        throw Error("weighted sum: field/weight count mismatch");
}

double WeightedSumField::eval(const Vec3& p) const
{
    double acc = 0.0;
    for (Eigen::Index k = 0; k < weights_.size(); ++k)
        if (weights_[k] != 0.0)
            acc += weights_[k] * fields_[static_cast<std::size_t>(k)]->eval(p);
    return acc;
}

Vec3 WeightedSumField::gradient(const Vec3& p) const
{
    Vec3 g = Vec3::Zero();
    for (Eigen::Index k = 0; k < weights_.size(); ++k)
        if (weights_[k] != 0.0)
            g += weights_[k] * fields_[static_cast<std::size_t>(k)]->gradient(p);
    return g;
}

Aabb WeightedSumField::bounds() const
{
    std::optional<Aabb> box;
    for (Eigen::Index k = 0; k < weights_.size(); ++k) {
        if (weights_[k] == 0.0)
            continue;
        const Aabb b = fields_[static_cast<std::size_t>(k)]->bounds();
        box = box ? box->merged(b) : b;
    }
    return box ? *box : fields_.front()->bounds();
}

Eigen::VectorXd project_simplex(const Eigen::VectorXd& v)
{
    if (v.size() == 0 || !v.allFinite())
        throw Error("project_simplex: input must be non-empty and finite");
    const double eps = 4.0 * static_cast<double>(v.size()) * std::numeric_limits<double>::epsilon();
    if (v.minCoeff() >= 0.0 && std::abs(v.sum() - 1.0) <= eps)
        return v;

    std::vector<double> u(v.data(), v.data() + v.size());
    std::sort(u.begin(), u.end(), std::greater<>());
    double css = 0.0, theta = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        css += u[j];
        const double t = (css - 1.0) / static_cast<double>(j + 1);
        if (u[j] - t > 0.0)
            theta = t;
    }
    return (v.array() - theta).cwiseMax(0.0);
}

Eigen::MatrixXd build_F_matrix(const PointCloud& z, const Decoder& decoder, const LatentCode& h_est)
{
    const FieldPtr estimate = decoder.decode(h_est);
    std::vector<const SdfField*> columns;
    columns.reserve(decoder.basis().fields.size() + 1);
    columns.push_back(estimate.get());
    for (const auto& f : decoder.basis().fields)
        columns.push_back(f.get());
    return kernels::field_matrix(z, columns);
}

double active_eval(const ActiveShapeCoeffs& coeffs, const Eigen::VectorXd& f_row, const Eigen::VectorXd& d)
{
    if (coeffs.c.size() != f_row.size() || d.size() != f_row.size())
        throw Error("active_eval: dimension mismatch");
    return f_row.cwiseProduct(d).dot(coeffs.c);
}

Eigen::VectorXd normalization_diagonal(const Decoder& decoder, double estimate_diameter)
{
    if (!(estimate_diameter > 0.0))
        throw Error("normalization_diagonal: estimate diameter must be positive");
    Eigen::VectorXd d(decoder.dim() + 1);
    d[0] = 1.0 / estimate_diameter;
    for (Eigen::Index k = 0; k < decoder.dim(); ++k)
        d[k + 1] = 1.0 / decoder.basis().diameters[static_cast<std::size_t>(k)];
    return d;
}

} // namespace crisp
