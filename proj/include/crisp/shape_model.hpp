#pragma once

#include "crisp/sdf.hpp"

#include <Eigen/Core>

#include <memory>
#include <string>
#include <vector>

namespace crisp {

/// Shape code in barycentric coordinates over the K basis shapes; the basis
/// codes themselves are the canonical vertices e_k.
struct LatentCode {
    Eigen::VectorXd alpha;

    static LatentCode vertex(Eigen::Index k, Eigen::Index dim);
    static LatentCode uniform(Eigen::Index dim);

    [[nodiscard]] Eigen::Index dim() const { return alpha.size(); }
    [[nodiscard]] bool on_simplex(double tol = 1e-9) const;
};

/// K signed distance fields with their bounding-box diameters.
struct ShapeBasis {
    std::vector<FieldPtr> fields;
    std::vector<double> diameters;

    /// Computes every diameter by surface sampling.
    static ShapeBasis from_fields(std::vector<FieldPtr> fields);

    [[nodiscard]] Eigen::Index size() const { return static_cast<Eigen::Index>(fields.size()); }
};

/// Maps a code to a signed distance field. Both shipped decoders blend the
/// basis, f(p | alpha) = sum_k w_k(alpha) f_k(p); they differ only in the
/// weight map.
class Decoder {
public:
    explicit Decoder(ShapeBasis basis);
    virtual ~Decoder() = default;

    [[nodiscard]] virtual Eigen::VectorXd weights(const Eigen::VectorXd& alpha) const = 0;
    /// (i, j) = d w_i / d alpha_j.
    [[nodiscard]] virtual Eigen::MatrixXd weight_jacobian(const Eigen::VectorXd& alpha) const = 0;
    [[nodiscard]] virtual std::string name() const = 0;

    [[nodiscard]] double eval(const LatentCode& code, const Vec3& p) const;
    /// d f(p | alpha) / d alpha.
    [[nodiscard]] Eigen::VectorXd grad_code(const LatentCode& code, const Vec3& p) const;
    /// Spatial gradient of the decoded field.
    [[nodiscard]] Vec3 grad_point(const LatentCode& code, const Vec3& p) const;
    [[nodiscard]] FieldPtr decode(const LatentCode& code) const;

    [[nodiscard]] const ShapeBasis& basis() const { return basis_; }
    [[nodiscard]] Eigen::Index dim() const { return basis_.size(); }

private:
    ShapeBasis basis_;
};

/// w = alpha. Exact at the vertices and affine in the code.
class LinearBlend final : public Decoder {
public:
    using Decoder::Decoder;
    [[nodiscard]] Eigen::VectorXd weights(const Eigen::VectorXd& alpha) const override;
    [[nodiscard]] Eigen::MatrixXd weight_jacobian(const Eigen::VectorXd& alpha) const override;
    [[nodiscard]] std::string name() const override { return "linear"; }
};

/// w = softmax(-||alpha - e_k||^2 / tau). Nonlinear in the code; at a vertex
/// the off-vertex weights are (K-1) e^(-2/tau) / (1 + (K-1) e^(-2/tau)).
class KernelBlend final : public Decoder {
public:
    KernelBlend(ShapeBasis basis, double tau = 0.05);
    [[nodiscard]] Eigen::VectorXd weights(const Eigen::VectorXd& alpha) const override;
    [[nodiscard]] Eigen::MatrixXd weight_jacobian(const Eigen::VectorXd& alpha) const override;
    [[nodiscard]] std::string name() const override { return "kernel"; }
    [[nodiscard]] double tau() const { return tau_; }

private:
    double tau_;
};

/// f(p) = sum_k w_k f_k(p) for fixed weights.
class WeightedSumField final : public SdfField {
public:
    WeightedSumField(std::vector<FieldPtr> fields, Eigen::VectorXd weights);
    [[nodiscard]] double eval(const Vec3& p) const override;
    [[nodiscard]] Vec3 gradient(const Vec3& p) const override;
    [[nodiscard]] Aabb bounds() const override;

private:
    std::vector<FieldPtr> fields_;
    Eigen::VectorXd weights_;
};

/// Euclidean projection onto {alpha >= 0, sum alpha = 1} by sorting.
/// Inputs that are already feasible come back bit-for-bit unchanged.
Eigen::VectorXd project_simplex(const Eigen::VectorXd& v);

/// Coefficients over [estimate column, basis columns].
struct ActiveShapeCoeffs {
    Eigen::VectorXd c;
};

/// n × (K+1): column 0 is the decoder at h_est, column k the k-th basis field.
Eigen::MatrixXd build_F_matrix(const PointCloud& z, const Decoder& decoder, const LatentCode& h_est);

/// F_row · D · c with D = diag(d).
double active_eval(const ActiveShapeCoeffs& coeffs, const Eigen::VectorXd& f_row,
                   const Eigen::VectorXd& d);

/// d_0 = 1 / diameter(decoded h_est), d_k = 1 / diameter_k.
Eigen::VectorXd normalization_diagonal(const Decoder& decoder, double estimate_diameter);

} // namespace crisp
