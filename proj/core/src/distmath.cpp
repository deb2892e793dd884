#include "trpa/distmath.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "trpa/errors.hpp"

namespace trpa {

namespace {

void require_same_size(std::size_t a, std::size_t b) {
    if (a != b) {
        throw ShapeError("distribution sizes differ: " + std::to_string(a) + " vs " +
                         std::to_string(b));
    }
}

// x log(x / y) with the 0 log 0 = 0 convention.
double xlogx_over_y(double x, double y) {
    if (x == 0.0) return 0.0;
    if (y == 0.0) return infinite_divergence();
    return x * (std::log(x) - std::log(y));
}

double xlogx(double x) { return x == 0.0 ? 0.0 : x * std::log(x); }

}  // namespace

double infinite_divergence() noexcept { return std::numeric_limits<double>::infinity(); }

bool is_infinite_divergence(double value) noexcept { return std::isinf(value) && value > 0; }

Categorical::Categorical(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw DomainError("categorical distribution needs at least one outcome");
    double total = 0.0;
    for (double p : probs_) {
        if (!(p >= 0.0) || !std::isfinite(p)) {
            throw DomainError("categorical probabilities must be finite and non-negative");
        }
        total += p;
    }
    if (std::abs(total - 1.0) > kSimplexTolerance) {
        throw DomainError("categorical probabilities sum to " + std::to_string(total));
    }
}

Categorical Categorical::from_logits(std::span<const double> logits) {
    std::vector<double> out(logits.size());
    log_softmax(logits, out);
    for (double& v : out) v = std::exp(v);
    return Categorical(std::move(out));
}

Categorical Categorical::uniform(std::size_t n) {
    if (n == 0) throw DomainError("uniform distribution over zero outcomes");
    return Categorical(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

BinaryDist::BinaryDist(double p1) : p1_(p1) {
    if (!(p1 >= 0.0 && p1 <= 1.0)) throw DomainError("binary probability outside [0,1]");
}

double sigmoid(double h) {
    if (!std::isfinite(h)) throw DomainError("sigmoid of a non-finite value");
    if (h >= 0.0) return 1.0 / (1.0 + std::exp(-h));
    const double e = std::exp(h);
    return e / (1.0 + e);
}

double log_sigmoid(double h) {
    if (std::isnan(h)) throw DomainError("log_sigmoid of NaN");
    if (h == std::numeric_limits<double>::infinity()) return 0.0;
    if (h == -std::numeric_limits<double>::infinity()) return h;
    if (h >= 0.0) return -std::log1p(std::exp(-h));
    return h - std::log1p(std::exp(h));
}

double log_sum_exp(std::span<const double> values) {
    if (values.empty()) return -std::numeric_limits<double>::infinity();
    const double m = *std::max_element(values.begin(), values.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double v : values) s += std::exp(v - m);
    return m + std::log(s);
}

void log_softmax(std::span<const double> logits, std::span<double> out) {
    require_same_size(logits.size(), out.size());
    const double lse = log_sum_exp(logits);
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
}

double kl(std::span<const double> p, std::span<const double> q) {
    require_same_size(p.size(), q.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double term = xlogx_over_y(p[i], q[i]);
        if (is_infinite_divergence(term)) return infinite_divergence();
        sum += term;
    }
    // Rounding can leave a tiny negative residue for p ~= q.
    return std::max(sum, 0.0);
}

double kl(const Categorical& p, const Categorical& q) { return kl(p.probs(), q.probs()); }

double tv(std::span<const double> p, std::span<const double> q) {
    require_same_size(p.size(), q.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - q[i]);
    return std::min(0.5 * sum, 1.0);
}

double tv(const Categorical& p, const Categorical& q) { return tv(p.probs(), q.probs()); }

double entropy(std::span<const double> p) {
    double h = 0.0;
    for (double v : p) h -= xlogx(v);
    return std::max(h, 0.0);
}

double binary_entropy(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("binary_entropy argument outside [0,1]");
    return -xlogx(p) - xlogx(1.0 - p);
}

double cross_entropy_binary(const BinaryDist& pstar, const BinaryDist& ptheta) {
    double h = 0.0;
    for (auto [w, q] : {std::pair{pstar.p1(), ptheta.p1()}, std::pair{pstar.p0(), ptheta.p0()}}) {
        if (w == 0.0) continue;
        if (q == 0.0) return infinite_divergence();
        h -= w * std::log(q);
    }
    return h;
}

double kl_binary(const BinaryDist& pstar, const BinaryDist& ptheta) {
    const double a = xlogx_over_y(pstar.p1(), ptheta.p1());
    const double b = xlogx_over_y(pstar.p0(), ptheta.p0());
    if (is_infinite_divergence(a) || is_infinite_divergence(b)) return infinite_divergence();
    return std::max(a + b, 0.0);
}

}  // namespace trpa

#include "trpa/sampling.hpp"

namespace trpa {

std::size_t sample_index(std::span<const double> weights, Rng& rng) {
    if (weights.empty()) throw DomainError("cannot sample from an empty distribution");
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw DomainError("sampling weights sum to zero");
    const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (u < acc) return i;
    }
    // u landed on the rounding gap at the top; return the last positive weight.
    for (std::size_t i = weights.size(); i-- > 0;) {
        if (weights[i] > 0.0) return i;
    }
    return weights.size() - 1;
}

}  // namespace trpa
