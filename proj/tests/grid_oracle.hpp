#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace testutil {

inline double quad(const Eigen::MatrixXd& q, const Eigen::VectorXd& c)
{
    return c.dot(q * c);
}

// Exact minimum over grid points with spacing 1/steps: every line through the
// grid along (e_{k-2} - e_{k-1}) is a convex 1-D quadratic, minimized over its
// integer points near the continuous minimizer.
inline double grid_minimum(const Eigen::MatrixXd& q, int steps)
{
    const Eigen::Index k = q.rows();
    double best = INFINITY;
    Eigen::VectorXd c = Eigen::VectorXd::Zero(k);
    const auto rec = [&](auto&& self, Eigen::Index pos, int left) -> void {
        if (k == 1) {
            c[0] = 1.0;
            best = quad(q, c);
            return;
        }
        if (pos == k - 2) {
            const Eigen::Index a = k - 2, b = k - 1;
            // c_a = m / steps, c_b = (left - m) / steps for m in [0, left].
            Eigen::VectorXd base = c;
            base[a] = 0.0;
            base[b] = static_cast<double>(left) / steps;
            Eigen::VectorXd dir = Eigen::VectorXd::Zero(k);
            dir[a] = 1.0 / steps;
            dir[b] = -1.0 / steps;
            const double qa = quad(q, dir), qb = 2.0 * base.dot(q * dir);
            double m_star = qa > 0.0 ? -qb / (2.0 * qa) : 0.0;
            m_star = std::clamp(m_star, 0.0, static_cast<double>(left));
            for (double m : {std::floor(m_star), std::ceil(m_star), 0.0, static_cast<double>(left)}) {
                if (m < 0 || m > left)
                    continue;
                best = std::min(best, quad(q, base + m * dir));
            }
            return;
        }
        for (int v = 0; v <= left; ++v) {
            c[pos] = static_cast<double>(v) / steps;
            self(self, pos + 1, left - v);
        }
        c[pos] = 0.0;
    };
    rec(rec, 0, steps);
    return best;
}

inline double brute_grid_minimum(const Eigen::MatrixXd& q, int steps)
{
    const Eigen::Index k = q.rows();
    double best = INFINITY;
    Eigen::VectorXd c(k);
    const auto rec = [&](auto&& self, Eigen::Index pos, int left) -> void {
        if (pos == k - 1) {
            c[pos] = static_cast<double>(left) / steps;
            best = std::min(best, quad(q, c));
            return;
        }
        for (int v = 0; v <= left; ++v) {
            c[pos] = static_cast<double>(v) / steps;
            self(self, pos + 1, left - v);
        }
    };
    rec(rec, 0, steps);
    return best;
}

} // namespace testutil
