#include "crisp/certification.hpp"

#include "crisp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace crisp {

SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& input, double tol, int max_sweeps)
{
    if (input.rows() != input.cols())
        throw Error("jacobi_eigen: matrix must be square");
    const Eigen::Index n = input.rows();
    Eigen::MatrixXd a = 0.5 * (input + input.transpose());
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
    const double scale = a.norm();

    int sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q)
                off += a(p, q) * a(p, q);
        if (std::sqrt(2.0 * off) <= tol * scale || off == 0.0)
            break;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0)
                    continue;
                // Rotation zeroing a(p, q): tan of the smaller root of
                // t^2 + 2 theta t - 1 = 0.
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = a(q, p) = 0.0;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto i, auto j) { return a(i, i) < a(j, j); });
    SymmetricEigen out;
    out.values.resize(n);
    out.vectors.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        out.values[i] = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
        out.vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
    }
    out.sweeps = sweep;
    return out;
}

void CertificateConfig::validate() const
{
    if (!(epsilon > 0.0))
        throw Error("certificate: epsilon must be positive");
    if (!(p > 0.0 && p <= 1.0))
        throw Error("certificate: p must lie in (0, 1]");
}

double nearest_rank_quantile(Eigen::VectorXd values, double p)
{
    if (values.size() == 0)
        throw Error("quantile of an empty set");
    const auto n = static_cast<double>(values.size());
    // The small slack keeps p n = 98 from rounding up to 99 when p n is
    // computed as 98.00000000000001.
    auto rank = static_cast<Eigen::Index>(std::ceil(p * n - 1e-9));
    rank = std::clamp<Eigen::Index>(rank, 1, values.size());
    std::nth_element(values.data(), values.data() + (rank - 1), values.data() + values.size());
    return values[rank - 1];
}

bool oc_from_residuals(const Eigen::VectorXd& residuals, const CertificateConfig& cfg)
{
    cfg.validate();
    return nearest_rank_quantile(residuals.cwiseAbs(), cfg.p) < cfg.epsilon;
}

Eigen::VectorXd certificate_residuals(const PointCloud& z_hat, const LatentCode& code, const Decoder& decoder)
{
    if (z_hat.cols() == 0)
        throw Error("certificate: no points");
    return kernels::eval_batch(*decoder.decode(code), z_hat).cwiseAbs();
}

bool oc_certificate(const PointCloud& z_hat, const LatentCode& code, const Decoder& decoder,
                    const CertificateConfig& cfg)
{
    return oc_from_residuals(certificate_residuals(z_hat, code, decoder), cfg);
}

DegeneracyReport degeneracy_report(const Eigen::MatrixXd& f, std::optional<double> threshold)
{
    if (f.rows() == 0 || f.cols() == 0)
        throw Error("degeneracy_report: empty matrix");
    const Eigen::MatrixXd gram = f.transpose() * f;
    const SymmetricEigen eig = jacobi_eigen(gram);
    DegeneracyReport r;
    r.lambda_min = eig.values[0];
    r.lambda_max = eig.values[eig.values.size() - 1];
    r.gram_condition =
        r.lambda_min > 0.0 ? r.lambda_max / r.lambda_min : std::numeric_limits<double>::infinity();
    r.threshold = threshold.value_or(1e-6 * gram.diagonal().mean());
    r.is_degenerate = r.lambda_min < r.threshold;
    return r;
}

} // namespace crisp
