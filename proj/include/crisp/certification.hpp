#pragma once

#include "crisp/shape_model.hpp"

#include <Eigen/Core>

#include <optional>

namespace crisp {

struct SymmetricEigen {
    Eigen::VectorXd values;  ///< ascending
    Eigen::MatrixXd vectors; ///< column i pairs with values[i]
    int sweeps = 0;
};

/// Cyclic Jacobi eigensolver for small dense symmetric matrices. Sweeps until
/// the off-diagonal Frobenius norm falls below tol times the matrix norm.
SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& a, double tol = 1e-15, int max_sweeps = 64);

struct CertificateConfig {
    double epsilon = 1e-2; ///< meters
    double p = 0.98;       ///< quantile level

    void validate() const;
};

/// Nearest-rank quantile: the ceil(p n)-th smallest value (1-based).
double nearest_rank_quantile(Eigen::VectorXd values, double p);

/// True when the p-quantile of the residuals is strictly below epsilon.
bool oc_from_residuals(const Eigen::VectorXd& residuals, const CertificateConfig& cfg);

/// |f(z_i | code)| for every column of z.
Eigen::VectorXd certificate_residuals(const PointCloud& z_hat, const LatentCode& code, const Decoder& decoder);

bool oc_certificate(const PointCloud& z_hat, const LatentCode& code, const Decoder& decoder,
                    const CertificateConfig& cfg);

struct DegeneracyReport {
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    double gram_condition = 0.0; ///< lambda_max / lambda_min; infinity when lambda_min <= 0
    double threshold = 0.0;
    bool is_degenerate = false;
};

/// Spectrum of F^T F. Without an explicit threshold the flag uses
/// 1e-6 × mean diagonal of the Gram matrix.
DegeneracyReport degeneracy_report(const Eigen::MatrixXd& f, std::optional<double> threshold = {});

} // namespace crisp
