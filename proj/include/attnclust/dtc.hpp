#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "attnclust/core.hpp"

namespace attnclust::dtc {

// Floor applied to p inside log(q / p).
inline constexpr double kLogClamp = 1e-12;

enum class Variant { Baseline, PI, TEP };

// Squared: (p - p')^2 per element (default). Absolute: |p - p'|.
enum class ConsistencyNorm { Squared, Absolute };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);
std::string to_string(ConsistencyNorm n);
ConsistencyNorm parse_consistency_norm(const std::string& name);

struct TrainConfig {
    Variant variant = Variant::Baseline;
    int epochs = 50;
    int ramp_length = 25;
    double learning_rate = 0.01;
    double alpha = 1.0;
    double beta = 0.9;
    int target_update_interval = 1;
    std::uint64_t seed = 0;
    ConsistencyNorm consistency_norm = ConsistencyNorm::Squared;

    // Throws ConfigError. epochs may be 0 (no updates); otherwise
    // ramp_length must not exceed epochs.
    void validate() const;
};

/// Student's t soft assignment:
///   p(k|i) ~ (1 + |z_i - mu_k|^2 / alpha)^(-(alpha + 1) / 2), rows normalised.
ProbabilityMatrix soft_assign(const Matrix& z, const Matrix& centers, double alpha);

/// Sharpened target q(k|i) ~ p(k|i)^2 / sum_i p(k|i), rows normalised.
/// Columns with zero total mass contribute zero.
ProbabilityMatrix target_distribution(const ProbabilityMatrix& p);

/// (1/N) sum_i sum_k q log(q / max(p, kLogClamp)); q = 0 terms contribute 0.
double kl_loss(const ProbabilityMatrix& q, const ProbabilityMatrix& p);

/// omega / (N K) * sum (p - p')^2, or sum |p - p'| for the absolute norm.
double consistency_loss(const ProbabilityMatrix& p, const ProbabilityMatrix& p_prime, double omega,
                        ConsistencyNorm norm = ConsistencyNorm::Squared);

/// exp(-5 (1 - t/T)^2) for t < T, 1 afterwards.
double ramp_up(int t, int ramp_length);

/// Exponential moving average of per-epoch predictions.
struct EnsembleState {
    Matrix accumulated; // P^t; all zeros at step 0
    double beta = 0.9;
    int step = 0;

    static EnsembleState zeros(Eigen::Index rows, Eigen::Index cols, double beta);
};

struct EmaUpdate {
    EnsembleState state;
    ProbabilityMatrix smoothed;
};

/// P^t = beta P^(t-1) + (1 - beta) p^t, smoothed = P^t / (1 - beta^t), rows
/// renormalised. At t = 1 the bias correction cancels and smoothed is p^1
/// bit for bit (no renormalisation). Throws std::invalid_argument
/// for beta outside [0, 1) or a shape mismatch.
EmaUpdate ema_update(const EnsembleState& state, const ProbabilityMatrix& p);

struct DecGradients {
    Matrix z;       // N x K'
    Matrix centers; // K x K'
};

/// Exact gradients of kl_loss(q, soft_assign(z, centers, alpha)) with q fixed.
DecGradients dec_gradients(const Matrix& z, const Matrix& centers, double alpha,
                           const ProbabilityMatrix& q);

/// Gradients of consistency_loss(p, p', omega) with respect to z (through p)
/// and, when p' is produced by the same centers from z_prime, also with
/// respect to z_prime. Pass z_prime = nullptr to treat p' as a constant.
struct ConsistencyGradients {
    Matrix z;
    Matrix z_prime; // empty when p' is constant
    Matrix centers;
};

ConsistencyGradients consistency_gradients(const Matrix& z, const Matrix* z_prime,
                                           const Matrix& centers, double alpha,
                                           const ProbabilityMatrix& p,
                                           const ProbabilityMatrix& p_prime, double omega,
                                           ConsistencyNorm norm = ConsistencyNorm::Squared);

struct TrainResult {
    ClusterState state;
    LabelVector assignment;
    std::vector<LossBreakdown> history;
};

/// Gradient descent on L1 (+ L2 for PI and TEP) over the projection and the
/// centers. q is refreshed every target_update_interval epochs. PI needs
/// `transformed` with the same shape as `features`.
TrainResult train(const FeatureMatrix& features, const ClusterState& initial, const TrainConfig& cfg,
                  const FeatureMatrix* transformed = nullptr);

struct Prediction {
    LabelVector assignment;
    ProbabilityMatrix p;
};

// argmax_k p(k|i), ties to the lowest k.
Prediction predict(const FeatureMatrix& features, const ClusterState& state);

}  // namespace attnclust::dtc
