#include "crisp/corrector.hpp"

#include "crisp/certification.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>

namespace crisp {

namespace {

constexpr int kMaxHalvings = 40;

void require_pair(const PointCloud& x, const PointCloud& z)
{
    if (x.cols() != z.cols())
        throw DegenerateConfiguration("corrector: X and Z differ in length");
    if (x.cols() < 3)
        throw DegenerateConfiguration("corrector: need at least 3 points");
}

LatentCode feasible(const LatentCode& code)
{
    return code.on_simplex(0.0) ? code : LatentCode{project_simplex(code.alpha)};
}

double sum_squares(const SdfField& field, const PointCloud& pts)
{
    return kernels::pose_objective(field, pts, Mat3::Identity(), Vec3::Zero(), false).value;
}

} // namespace

void CorrectorConfig::validate() const
{
    if (!(z_step > 0.0) || !(h_step > 0.0))
        throw Error("corrector: step sizes must be positive");
    if (z_iters < 1 || h_iters < 1 || outer_rounds < 1)
        throw Error("corrector: iteration counts must be at least 1");
    if (!(convergence_tol >= 0.0))
        throw Error("corrector: convergence_tol must be non-negative");
    if (buffer_capacity < 1)
        throw Error("corrector: buffer capacity must be at least 1");
}

MultiViewBuffer::MultiViewBuffer(std::size_t capacity) : capacity_(capacity)
{
    if (capacity_ == 0)
        throw Error("multi-view buffer: capacity must be at least 1");
}

void MultiViewBuffer::push(ViewObservation view)
{
    require_pair(view.x, view.z);
    if (views_.size() == capacity_)
        views_.pop_front();
    views_.push_back(std::move(view));
}

std::string to_string(SolverKind s)
{
    return s == SolverKind::Bcd ? "bcd" : "lsq";
}

SolverKind solver_from_string(const std::string& s)
{
    if (s == "bcd")
        return SolverKind::Bcd;
    if (s == "lsq")
        return SolverKind::Lsq;
    throw Error("unknown solver '" + s + "' (expected bcd or lsq)");
}

PointCloud CorrectionResult::z_hat_stacked() const
{
    Eigen::Index n = 0;
    for (const auto& z : z_hat)
        n += z.cols();
    PointCloud out(3, n);
    Eigen::Index at = 0;
    for (const auto& z : z_hat) {
        out.middleCols(at, z.cols()) = z;
        at += z.cols();
    }
    return out;
}

double objective_F(const PointCloud& z, const LatentCode& code, const PointCloud& x, const Decoder& decoder)
{
    require_pair(x, z);
    const Pose fit = arun_fit(x, z);
    return kernels::pose_objective(*decoder.decode(code), x, fit.rotation, fit.translation, false).value;
}

kernels::PoseObjective pose_objective(const PointCloud& x, const Pose& pose, const LatentCode& code,
                                      const Decoder& decoder)
{
    return kernels::pose_objective(*decoder.decode(code), x, pose.rotation, pose.translation, true);
}

ZUpdate z_update(const PointCloud& x, const PointCloud& z_init, const LatentCode& code, const Decoder& decoder,
                 const CorrectorConfig& cfg)
{
    require_pair(x, z_init);
    const FieldPtr field = decoder.decode(code);
    const auto n = static_cast<double>(x.cols());

    ZUpdate out;
    out.pose = arun_fit(x, z_init);
    kernels::PoseObjective cur = kernels::pose_objective(*field, x, out.pose.rotation, out.pose.translation);
    out.initial = cur.value;

    double step = cfg.z_step;
    for (int it = 0; it < cfg.z_iters; ++it) {
        if (cur.value == 0.0 || cur.grad.isZero(0.0))
            break;
        const PointCloud y = out.pose.apply(x);
        const Vec3 c = y.rowwise().sum() / n;
        const double r2 = std::max((y.colwise() - c).squaredNorm() / n, 1e-12);
        const Vec3 g_omega = cur.grad.head<3>();
        const Vec3 g_v = cur.grad.tail<3>();
        const Vec3 g_theta = g_omega - c.cross(g_v);

        bool accepted = false;
        for (int h = 0; h < kMaxHalvings; ++h) {
            const Mat3 dr = exp_so3(-step * g_theta / r2);
            Pose trial;
            trial.rotation = dr * out.pose.rotation;
            trial.translation = dr * (out.pose.translation - c) + c - step * g_v;
            trial.chain = out.pose.chain + 1;
            if (trial.chain > Pose::kMaxChain)
                trial = trial.orthonormalized();
            const double value =
                kernels::pose_objective(*field, x, trial.rotation, trial.translation, false).value;
            if (value < cur.value) {
                out.pose = trial;
                accepted = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if (!accepted)
            break;
        ++out.iterations;
        cur = kernels::pose_objective(*field, x, out.pose.rotation, out.pose.translation);
    }
    out.final = cur.value;
    out.z_hat = out.pose.apply(x);
    return out;
}

ShapeUpdate shape_update_pgd(const PointCloud& z_hat, const LatentCode& alpha_init, const Decoder& decoder,
                             const CorrectorConfig& cfg)
{
    if (z_hat.cols() == 0)
        throw Error("shape update: no points");
    ShapeUpdate out;
    out.code = feasible(alpha_init);
    kernels::CodeObjective cur = kernels::code_objective(decoder, z_hat, out.code.alpha);
    out.initial = cur.value;

    double step = cfg.h_step;
    for (int it = 0; it < cfg.h_iters; ++it) {
        if (cur.value == 0.0)
            break;
        bool accepted = false;
        bool stationary = false;
        for (int h = 0; h < kMaxHalvings; ++h) {
            const Eigen::VectorXd trial = project_simplex(out.code.alpha - step * cur.grad);
            if (trial == out.code.alpha) {
                stationary = true;
                break;
            }
            const double value = kernels::code_objective(decoder, z_hat, trial, false).value;
            if (value < cur.value) {
                out.code.alpha = trial;
                accepted = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if (!accepted || stationary)
            break;
        ++out.iterations;
        cur = kernels::code_objective(decoder, z_hat, out.code.alpha);
    }
    out.final = cur.value;
    return out;
}

double simplex_kkt_residual(const Eigen::MatrixXd& q, const Eigen::VectorXd& c, double eta)
{
    const Eigen::VectorXd grad = 2.0 * q * c;
    return (c - project_simplex(c - eta * grad)).norm();
}

SimplexLsq solve_simplex_lsq(const Eigen::MatrixXd& a, double ridge)
{
    const Eigen::Index m = a.cols();
    if (m == 0)
        throw Error("simplex lsq: no columns");
    Eigen::MatrixXd q = a.transpose() * a;
    q.diagonal().array() += ridge;
    const auto objective = [&](const Eigen::VectorXd& c) { return c.dot(q * c); };

    const double lmax = jacobi_eigen(q).values[m - 1];
    const double lip = lmax > 0.0 ? 2.0 * lmax : 1.0;
    const double eta = 1.0 / lip;

    // Accelerated projected gradient with function-value restart.
    Eigen::VectorXd c = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
    Eigen::VectorXd y = c;
    double t = 1.0;
    double fc = objective(c);
    int it = 0;
    constexpr int kMaxIters = 5000;
    for (; it < kMaxIters; ++it) {
        if (simplex_kkt_residual(q, c, eta) < 1e-10)
            break;
        const Eigen::VectorXd next = project_simplex(y - eta * (2.0 * q * y));
        const double fn = objective(next);
        if (fn > fc) {
            y = c;
            t = 1.0;
            continue;
        }
        const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = next + ((t - 1.0) / tn) * (next - c);
        c = next;
        fc = fn;
        t = tn;
    }

    // Equality-constrained solve on the support: exact when the support has
    // been identified, which the first-order loop only approaches slowly.
    std::vector<Eigen::Index> support;
    for (Eigen::Index i = 0; i < m; ++i)
        if (c[i] > 1e-9)
            support.push_back(i);
    if (!support.empty()) {
        const auto s = static_cast<Eigen::Index>(support.size());
        Eigen::MatrixXd qs(s, s);
        for (Eigen::Index i = 0; i < s; ++i)
            for (Eigen::Index j = 0; j < s; ++j)
                qs(i, j) = q(support[static_cast<std::size_t>(i)], support[static_cast<std::size_t>(j)]);
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(qs);
        const Eigen::VectorXd w = ldlt.solve(Eigen::VectorXd::Ones(s));
        const double denom = w.sum();
        if (ldlt.info() == Eigen::Success && w.allFinite() && denom > 0.0) {
            Eigen::VectorXd polished = Eigen::VectorXd::Zero(m);
            for (Eigen::Index i = 0; i < s; ++i)
                polished[support[static_cast<std::size_t>(i)]] = w[i] / denom;
            if (polished.minCoeff() >= 0.0) {
                polished = project_simplex(polished);
                if (objective(polished) <= fc &&
                    simplex_kkt_residual(q, polished, eta) <= simplex_kkt_residual(q, c, eta)) {
                    c = polished;
                    fc = objective(c);
                }
            }
        }
    }

    SimplexLsq out;
    out.c = c;
    out.objective = (a * c).squaredNorm();
    out.kkt_residual = simplex_kkt_residual(q, c, eta);
    out.iterations = it;
    return out;
}

SimplexLsq shape_update_lsq(const PointCloud& z_hat, const Decoder& decoder, const LatentCode& h_est,
                            const Eigen::VectorXd& d)
{
    if (z_hat.cols() == 0)
        throw Error("shape update: no points");
    if (d.size() != decoder.dim() + 1)
        throw Error("shape update: normalization has wrong length");
    return solve_simplex_lsq(build_F_matrix(z_hat, decoder, h_est) * d.asDiagonal());
}

LatentCode recombine_code(const ActiveShapeCoeffs& coeffs, const Eigen::VectorXd& d, const LatentCode& h_est)
{
    const Eigen::Index k = h_est.dim();
    if (coeffs.c.size() != k + 1 || d.size() != k + 1)
        throw Error("recombine_code: dimension mismatch");
    Eigen::VectorXd alpha = coeffs.c[0] * d[0] * h_est.alpha;
    for (Eigen::Index i = 0; i < k; ++i)
        alpha[i] += coeffs.c[i + 1] * d[i + 1];
    const double total = alpha.sum();
    if (!(total > 0.0))
        throw Error("recombine_code: recombined code has non-positive mass");
    return {project_simplex(alpha / total)};
}

CorrectionResult bcd_correct(const MultiViewBuffer& buffer, const LatentCode& alpha_init, const Decoder& decoder,
                             const CorrectorConfig& cfg)
{
    cfg.validate();
    if (buffer.empty())
        throw Error("bcd_correct: empty buffer");
    const auto& views = buffer.views();

    CorrectionResult res;
    res.solver = SolverKind::Bcd;
    res.code_hat = feasible(alpha_init);
    res.z_hat.reserve(views.size());
    res.poses.resize(views.size());

    double total = 0.0;
    for (const auto& v : views) {
        res.z_hat.push_back(v.z);
        total += objective_F(v.z, res.code_hat, v.x, decoder);
    }
    res.objective_trace.push_back(total);

    for (int round = 0; round < cfg.outer_rounds; ++round) {
        for (std::size_t i = 0; i < views.size(); ++i) {
            ZUpdate zu = z_update(views[i].x, res.z_hat[i], res.code_hat, decoder, cfg);
            res.z_iterations += zu.iterations;
            res.poses[i] = zu.pose;
            res.z_hat[i] = std::move(zu.z_hat);
        }
        const ShapeUpdate su = shape_update_pgd(res.z_hat_stacked(), res.code_hat, decoder, cfg);
        res.h_iterations += su.iterations;
        res.code_hat = su.code;
        ++res.outer_rounds;

        const double prev = res.objective_trace.back();
        res.objective_trace.push_back(su.final);
        if (su.final == 0.0 || prev - su.final < cfg.convergence_tol * prev)
            break;
    }
    return res;
}

CorrectionResult lsq_correct(const MultiViewBuffer& buffer, const LatentCode& h_est, const Decoder& decoder,
                             const CorrectorConfig& cfg, std::optional<double> estimate_diameter)
{
    cfg.validate();
    if (buffer.empty())
        throw Error("lsq_correct: empty buffer");
    const auto& views = buffer.views();
    const LatentCode est = feasible(h_est);

    CorrectionResult res;
    res.solver = SolverKind::Lsq;
    double initial = 0.0, after_z = 0.0;
    for (const auto& v : views) {
        initial += objective_F(v.z, est, v.x, decoder);
        ZUpdate zu = z_update(v.x, v.z, est, decoder, cfg);
        res.z_iterations += zu.iterations;
        after_z += zu.final;
        res.poses.push_back(zu.pose);
        res.z_hat.push_back(std::move(zu.z_hat));
    }

    const double diameter = estimate_diameter ? *estimate_diameter : bounding_box_diameter(*decoder.decode(est), kEstimateDiameterSamples);
    const Eigen::VectorXd d = normalization_diagonal(decoder, diameter);
    const PointCloud stacked = res.z_hat_stacked();
    const SimplexLsq lsq = shape_update_lsq(stacked, decoder, est, d);
    res.h_iterations = lsq.iterations;
    res.coeffs = ActiveShapeCoeffs{lsq.c};
    res.code_hat = recombine_code(*res.coeffs, d, est);
    res.outer_rounds = 1;
    res.objective_trace = {initial, after_z, sum_squares(*decoder.decode(res.code_hat), stacked)};
    return res;
}

} // namespace crisp
