#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace trpa {

/// Tolerance used when validating that probabilities sum to one.
inline constexpr double kSimplexTolerance = 1e-9;

/// Returned by divergence functions when the first argument puts mass where
/// the second has none. Callers test with is_infinite_divergence().
double infinite_divergence() noexcept;
bool is_infinite_divergence(double value) noexcept;

/// A finite categorical distribution. Entries are non-negative and sum to one
/// within kSimplexTolerance; construction throws DomainError otherwise.
class Categorical {
public:
    explicit Categorical(std::vector<double> probs);

    /// Softmax of a logit vector, computed through log-sum-exp.
    static Categorical from_logits(std::span<const double> logits);
    static Categorical uniform(std::size_t n);

    std::span<const double> probs() const noexcept { return probs_; }
    std::size_t size() const noexcept { return probs_.size(); }
    double operator[](std::size_t i) const { return probs_[i]; }

private:
    std::vector<double> probs_;
};

/// Distribution of a binary event z; p1 = P(z = 1).
class BinaryDist {
public:
    explicit BinaryDist(double p1);

    double p1() const noexcept { return p1_; }
    double p0() const noexcept { return 1.0 - p1_; }

private:
    double p1_;
};

double sigmoid(double h);
/// log(sigmoid(h)) without cancellation for large |h|.
double log_sigmoid(double h);
double log_sum_exp(std::span<const double> values);
/// In-place log-softmax of a row.
void log_softmax(std::span<const double> logits, std::span<double> out);

/// Sum_i p_i log(p_i / q_i) in nats with 0 log 0 = 0. Returns
/// infinite_divergence() when some p_i > 0 has q_i = 0.
double kl(const Categorical& p, const Categorical& q);
double kl(std::span<const double> p, std::span<const double> q);
/// Half the L1 distance.
double tv(const Categorical& p, const Categorical& q);
double tv(std::span<const double> p, std::span<const double> q);
/// Shannon entropy in nats.
double entropy(std::span<const double> p);

/// f(p) = -p log p - (1-p) log(1-p); endpoints map to zero.
double binary_entropy(double p);
/// H(p* || p_theta) = -p*_1 log p_theta_1 - p*_0 log p_theta_0.
double cross_entropy_binary(const BinaryDist& pstar, const BinaryDist& ptheta);
double kl_binary(const BinaryDist& pstar, const BinaryDist& ptheta);

}  // namespace trpa
