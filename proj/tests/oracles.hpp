#pragma once

// Reference computations used as test oracles. They work on plain nested
// vectors and never call into the library, so a shared bug cannot hide.

#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

using Rows = std::vector<std::vector<double>>;

inline double sigmoid(double h) { return 1.0 / (1.0 + std::exp(-h)); }

inline std::vector<double> softmax(const std::vector<double>& z) {
    double m = z[0];
    for (double v : z) m = v > m ? v : m;
    std::vector<double> p(z.size());
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) s += (p[i] = std::exp(z[i] - m));
    for (double& v : p) v /= s;
    return p;
}

inline double xlogx(double x) { return x == 0.0 ? 0.0 : x * std::log(x); }

inline double kl(const std::vector<double>& p, const std::vector<double>& q) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) s += p[i] * std::log(p[i] / q[i]);
    }
    return s;
}

inline double binary_entropy(double p) { return -xlogx(p) - xlogx(1.0 - p); }

/// E_{x ~ d, y1, y2 ~ pi_theta} of the pair cross-entropy (kl=false) or
/// binary KL (kl=true) under Bradley-Terry preferences from `rewards`.
inline double online_objective(const Rows& theta, const Rows& ref, const Rows& rewards,
                               const std::vector<double>& d, double beta, bool kl_objective) {
    double total = 0.0;
    for (std::size_t x = 0; x < theta.size(); ++x) {
        const auto pt = softmax(theta[x]);
        const auto pr = softmax(ref[x]);
        for (std::size_t i = 0; i < pt.size(); ++i) {
            for (std::size_t j = 0; j < pt.size(); ++j) {
                const double ps = sigmoid(rewards[x][i] - rewards[x][j]);
                const double h = beta * (std::log(pt[i] / pr[i]) - std::log(pt[j] / pr[j]));
                const double q = sigmoid(h);
                double f = -ps * std::log(q) - (1.0 - ps) * std::log(1.0 - q);
                if (kl_objective) f -= binary_entropy(ps);
                total += d[x] * pt[i] * pt[j] * f;
            }
        }
    }
    return total;
}

/// Richardson-extrapolated central differences over every entry of `z`.
inline Rows gradient(const std::function<double(const Rows&)>& f, Rows z, double h = 1e-4) {
    Rows g = z;
    for (std::size_t r = 0; r < z.size(); ++r) {
        for (std::size_t c = 0; c < z[r].size(); ++c) {
            const double saved = z[r][c];
            auto diff = [&](double step) {
                z[r][c] = saved + step;
                const double up = f(z);
                z[r][c] = saved - step;
                const double down = f(z);
                z[r][c] = saved;
                return (up - down) / (2.0 * step);
            };
            g[r][c] = (4.0 * diff(h / 2.0) - diff(h)) / 3.0;
        }
    }
    return g;
}

inline double max_abs_diff(const Rows& a, const Rows& b) {
    double m = 0.0;
    for (std::size_t r = 0; r < a.size(); ++r) {
        for (std::size_t c = 0; c < a[r].size(); ++c) m = std::fmax(m, std::fabs(a[r][c] - b[r][c]));
    }
    return m;
}

/// Population mean/std normalisation, written out directly.
inline std::vector<double> advantages(const std::vector<double>& r) {
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= static_cast<double>(r.size());
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(r.size()));
    std::vector<double> a(r.size(), 0.0);
    if (sd < 1e-8) return a;
    for (std::size_t i = 0; i < r.size(); ++i) a[i] = (r[i] - mean) / sd;
    return a;
}

}  // namespace oracle
