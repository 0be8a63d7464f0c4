#include "attnclust/dtc.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "attnclust/embedding.hpp"

namespace attnclust::dtc {

std::string to_string(Variant v) {
    switch (v) {
    case Variant::Baseline:
        return "baseline";
    case Variant::PI:
        return "pi";
    case Variant::TEP:
        return "tep";
    }
    return "unknown";
}

Variant parse_variant(const std::string& name) {
    if (name == "baseline" || name == "Baseline") {
        return Variant::Baseline;
    }
    if (name == "pi" || name == "PI") {
        return Variant::PI;
    }
    if (name == "tep" || name == "TEP") {
        return Variant::TEP;
    }
    throw ConfigError("unknown variant '" + name + "' (expected baseline, pi or tep)");
}

std::string to_string(ConsistencyNorm n) {
    return n == ConsistencyNorm::Squared ? "squared" : "absolute";
}

ConsistencyNorm parse_consistency_norm(const std::string& name) {
    if (name == "squared") {
        return ConsistencyNorm::Squared;
    }
    if (name == "absolute") {
        return ConsistencyNorm::Absolute;
    }
    throw ConfigError("unknown consistency norm '" + name + "' (expected squared or absolute)");
}

void TrainConfig::validate() const {
    if (epochs < 0) {
        throw ConfigError("epochs must be non-negative");
    }
    if (ramp_length < 1) {
        throw ConfigError("ramp_length must be positive");
    }
    if (epochs > 0 && ramp_length > epochs) {
        throw ConfigError("ramp_length " + std::to_string(ramp_length) + " exceeds epochs " +
                          std::to_string(epochs));
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate must be positive");
    }
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
        throw ConfigError("alpha must be positive");
    }
    if (!(beta >= 0.0 && beta < 1.0)) {
        throw ConfigError("beta must lie in [0, 1)");
    }
    if (target_update_interval < 1) {
        throw ConfigError("target_update_interval must be positive");
    }
}

namespace {

void require_same_shape(const ProbabilityMatrix& a, const ProbabilityMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument("probability matrices differ in shape");
    }
}

// log of the unnormalised Student's t kernel.
Matrix log_kernel(const Matrix& z, const Matrix& centers, double alpha) {
    if (z.cols() != centers.cols()) {
        throw std::invalid_argument("embedded points and centers differ in dimension");
    }
    if (!(alpha > 0.0)) {
        throw std::invalid_argument("alpha must be positive");
    }
    const double power = -(alpha + 1.0) / 2.0;
    Matrix out(z.rows(), centers.rows());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        for (Eigen::Index k = 0; k < centers.rows(); ++k) {
            const double d = (z.row(i) - centers.row(k)).squaredNorm();
            out(i, k) = power * std::log1p(d / alpha);
        }
    }
    return out;
}

// Chains R = dL/d(log u) (N x K) through the kernel into z and the centers.
void backprop_kernel(const Matrix& z, const Matrix& centers, double alpha, const Matrix& r,
                     Matrix& grad_z, Matrix& grad_centers) {
    const double scale = (alpha + 1.0) / 2.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        for (Eigen::Index k = 0; k < centers.rows(); ++k) {
            if (r(i, k) == 0.0) {
                continue;
            }
            const RowVector diff = z.row(i) - centers.row(k);
            // d log u / d dist = -(alpha + 1) / (2 (alpha + dist)); d dist / dz = 2 diff.
            const double g = -r(i, k) * scale / (alpha + diff.squaredNorm()) * 2.0;
            grad_z.row(i) += g * diff;
            grad_centers.row(k) -= g * diff;
        }
    }
}

// dL/d(log u) from dL/dp through the row normalisation p = u / sum(u).
Matrix through_normalisation(const Matrix& p, const Matrix& dl_dp) {
    Matrix r(p.rows(), p.cols());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const double inner = dl_dp.row(i).dot(p.row(i));
        for (Eigen::Index k = 0; k < p.cols(); ++k) {
            r(i, k) = p(i, k) * (dl_dp(i, k) - inner);
        }
    }
    return r;
}

Matrix consistency_dl_dp(const Matrix& p, const Matrix& p_prime, double omega,
                         ConsistencyNorm norm) {
    const double n = static_cast<double>(p.rows() * p.cols());
    const Matrix diff = p - p_prime;
    if (norm == ConsistencyNorm::Squared) {
        return (2.0 * omega / n) * diff;
    }
    return (omega / n) * diff.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

}  // namespace

ProbabilityMatrix soft_assign(const Matrix& z, const Matrix& centers, double alpha) {
    Matrix logu = log_kernel(z, centers, alpha);
    for (Eigen::Index i = 0; i < logu.rows(); ++i) {
        const double peak = logu.row(i).maxCoeff();
        logu.row(i) = (logu.row(i).array() - peak).exp().matrix();
    }
    return ProbabilityMatrix(normalize_rows(std::move(logu)));
}

ProbabilityMatrix target_distribution(const ProbabilityMatrix& p) {
    const RowVector freq = p.data().colwise().sum();
    Matrix q(p.rows(), p.cols());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (Eigen::Index k = 0; k < p.cols(); ++k) {
            q(i, k) = freq(k) > 0.0 ? p(i, k) * p(i, k) / freq(k) : 0.0;
        }
    }
    return ProbabilityMatrix(normalize_rows(std::move(q)));
}

double kl_loss(const ProbabilityMatrix& q, const ProbabilityMatrix& p) {
    require_same_shape(q, p);
    double total = 0.0;
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
        for (Eigen::Index k = 0; k < q.cols(); ++k) {
            const double qv = q(i, k);
            if (qv > 0.0) {
                total += qv * std::log(qv / std::max(p(i, k), kLogClamp));
            }
        }
    }
    // Rows only sum to one within tolerance, so rounding can dip below zero.
    return std::max(0.0, total / static_cast<double>(q.rows()));
}

double consistency_loss(const ProbabilityMatrix& p, const ProbabilityMatrix& p_prime, double omega,
                        ConsistencyNorm norm) {
    require_same_shape(p, p_prime);
    if (!(omega >= 0.0 && omega <= 1.0)) {
        throw std::invalid_argument("omega must lie in [0, 1]");
    }
    if (omega == 0.0) {
        return 0.0;
    }
    const Matrix diff = p.data() - p_prime.data();
    const double sum = norm == ConsistencyNorm::Squared ? diff.squaredNorm() : diff.cwiseAbs().sum();
    return omega * sum / static_cast<double>(p.rows() * p.cols());
}

double ramp_up(int t, int ramp_length) {
    if (t < 0 || ramp_length < 1) {
        throw std::invalid_argument("ramp_up needs t >= 0 and ramp_length >= 1");
    }
    if (t >= ramp_length) {
        return 1.0;
    }
    const double r = 1.0 - static_cast<double>(t) / static_cast<double>(ramp_length);
    return std::exp(-5.0 * r * r);
}

EnsembleState EnsembleState::zeros(Eigen::Index rows, Eigen::Index cols, double beta) {
    return {Matrix::Zero(rows, cols), beta, 0};
}

EmaUpdate ema_update(const EnsembleState& state, const ProbabilityMatrix& p) {
    if (!(state.beta >= 0.0 && state.beta < 1.0)) {
        throw std::invalid_argument("ensemble momentum beta must lie in [0, 1); beta = 1 makes the rescale divide by zero");
    }
    if (state.step < 0) {
        throw std::invalid_argument("ensemble step must be non-negative");
    }
    if (state.accumulated.rows() != p.rows() || state.accumulated.cols() != p.cols()) {
        throw std::invalid_argument("ensemble shape does not match predictions");
    }
    const double beta = state.beta;
    const int t = state.step + 1;
    const double scale = 1.0 - std::pow(beta, t);

    EnsembleState next{beta * state.accumulated + (1.0 - beta) * p.data(), beta, t};
    if (t == 1) {
        // (1 - beta) / scale == 1 exactly and the history is zero: p itself.
        return {std::move(next), p};
    }
    Matrix smoothed = (beta / scale) * state.accumulated + ((1.0 - beta) / scale) * p.data();
    return {std::move(next), ProbabilityMatrix(normalize_rows(std::move(smoothed)))};
}

DecGradients dec_gradients(const Matrix& z, const Matrix& centers, double alpha,
                           const ProbabilityMatrix& q) {
    const ProbabilityMatrix p = soft_assign(z, centers, alpha);
    if (q.rows() != p.rows() || q.cols() != p.cols()) {
        throw std::invalid_argument("target distribution shape mismatch");
    }
    const double n = static_cast<double>(z.rows());
    // Terms where q = 0 or p sits under the log clamp carry no gradient.
    Matrix r(p.rows(), p.cols());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        double mass = 0.0;
        for (Eigen::Index k = 0; k < p.cols(); ++k) {
            mass += p(i, k) >= kLogClamp ? q(i, k) : 0.0;
        }
        for (Eigen::Index k = 0; k < p.cols(); ++k) {
            const double w = p(i, k) >= kLogClamp ? q(i, k) : 0.0;
            r(i, k) = -(w - p(i, k) * mass) / n;
        }
    }
    DecGradients g{Matrix::Zero(z.rows(), z.cols()), Matrix::Zero(centers.rows(), centers.cols())};
    backprop_kernel(z, centers, alpha, r, g.z, g.centers);
    return g;
}

ConsistencyGradients consistency_gradients(const Matrix& z, const Matrix* z_prime,
                                           const Matrix& centers, double alpha,
                                           const ProbabilityMatrix& p,
                                           const ProbabilityMatrix& p_prime, double omega,
                                           ConsistencyNorm norm) {
    require_same_shape(p, p_prime);
    ConsistencyGradients g{Matrix::Zero(z.rows(), z.cols()), Matrix(),
                           Matrix::Zero(centers.rows(), centers.cols())};
    const Matrix dl_dp = consistency_dl_dp(p.data(), p_prime.data(), omega, norm);
    backprop_kernel(z, centers, alpha, through_normalisation(p.data(), dl_dp), g.z, g.centers);
    if (z_prime != nullptr) {
        g.z_prime = Matrix::Zero(z_prime->rows(), z_prime->cols());
        backprop_kernel(*z_prime, centers, alpha, through_normalisation(p_prime.data(), -dl_dp),
                        g.z_prime, g.centers);
    }
    return g;
}

namespace {

void check_train_inputs(const FeatureMatrix& features, const ClusterState& initial,
                        const TrainConfig& cfg, const FeatureMatrix* transformed) {
    cfg.validate();
    initial.validate();
    if (features.cols() != initial.feature_dim()) {
        throw std::invalid_argument("feature dimension " + std::to_string(features.cols()) +
                                    " does not match projection input " +
                                    std::to_string(initial.feature_dim()));
    }
    if (cfg.variant == Variant::PI) {
        if (transformed == nullptr) {
            throw std::invalid_argument("PI variant requires transformed features");
        }
        if (transformed->rows() != features.rows() || transformed->cols() != features.cols()) {
            throw std::invalid_argument("transformed features must match the feature shape");
        }
    }
}

}  // namespace

TrainResult train(const FeatureMatrix& features, const ClusterState& initial, const TrainConfig& cfg,
                  const FeatureMatrix* transformed) {
    check_train_inputs(features, initial, cfg, transformed);

    TrainResult result;
    ClusterState state = initial;
    state.alpha = cfg.alpha;
    const Matrix& x = features.data();

    std::optional<ProbabilityMatrix> q;
    EnsembleState ensemble = EnsembleState::zeros(x.rows(), state.cluster_count(), cfg.beta);
    std::optional<ProbabilityMatrix> smoothed;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        try {
            const Matrix z = embedding::project(x, state.projection_weights, state.projection_offset);
            const ProbabilityMatrix p = soft_assign(z, state.centers, state.alpha);
            if (epoch % cfg.target_update_interval == 0 || !q) {
                q = target_distribution(p);
            }

            const double l1 = kl_loss(*q, p);
            DecGradients dec = dec_gradients(z, state.centers, state.alpha, *q);
            Matrix grad_z = std::move(dec.z);
            Matrix grad_centers = std::move(dec.centers);
            Matrix grad_z_prime;

            double omega = 0.0;
            double l2 = 0.0;
            if (cfg.variant == Variant::PI) {
                omega = ramp_up(epoch, cfg.ramp_length);
                const Matrix zt = embedding::project(transformed->data(), state.projection_weights,
                                                     state.projection_offset);
                const ProbabilityMatrix pt = soft_assign(zt, state.centers, state.alpha);
                l2 = consistency_loss(p, pt, omega, cfg.consistency_norm);
                ConsistencyGradients cg = consistency_gradients(z, &zt, state.centers, state.alpha, p,
                                                                pt, omega, cfg.consistency_norm);
                grad_z += cg.z;
                grad_centers += cg.centers;
                grad_z_prime = std::move(cg.z_prime);
            } else if (cfg.variant == Variant::TEP) {
                omega = ramp_up(epoch, cfg.ramp_length);
                // The ensemble target covers epochs before this one; none exists at epoch 0.
                if (smoothed) {
                    l2 = consistency_loss(p, *smoothed, omega, cfg.consistency_norm);
                    ConsistencyGradients cg = consistency_gradients(
                        z, nullptr, state.centers, state.alpha, p, *smoothed, omega, cfg.consistency_norm);
                    grad_z += cg.z;
                    grad_centers += cg.centers;
                }
                EmaUpdate ema = ema_update(ensemble, p);
                ensemble = std::move(ema.state);
                smoothed = std::move(ema.smoothed);
            }

            const LossBreakdown loss = LossBreakdown::make(l1, l2, omega);
            if (!std::isfinite(loss.total)) {
                throw DivergedError(epoch, "loss diverged at epoch " + std::to_string(epoch));
            }
            result.history.push_back(loss);

            embedding::ProjectionGradients pg = embedding::projection_gradients(features, state, grad_z);
            if (grad_z_prime.size() > 0) {
                const embedding::ProjectionGradients pgt =
                    embedding::projection_gradients(*transformed, state, grad_z_prime);
                pg.weights += pgt.weights;
                pg.offset += pgt.offset;
            }
            state.projection_weights -= cfg.learning_rate * pg.weights;
            state.projection_offset -= cfg.learning_rate * pg.offset;
            state.centers -= cfg.learning_rate * grad_centers;
            if (!state.projection_weights.allFinite() || !state.projection_offset.allFinite() ||
                !state.centers.allFinite()) {
                throw DivergedError(epoch, "parameters diverged at epoch " + std::to_string(epoch));
            }
        } catch (const InvalidProbabilityError& e) {
            throw DivergedError(epoch, "diverged at epoch " + std::to_string(epoch) + ": " + e.what());
        }
    }

    result.assignment = predict(features, state).assignment;
    result.state = std::move(state);
    return result;
}

Prediction predict(const FeatureMatrix& features, const ClusterState& state) {
    state.validate();
    if (features.cols() != state.feature_dim()) {
        throw std::invalid_argument("feature dimension does not match the projection");
    }
    const Matrix z = embedding::project(features.data(), state.projection_weights, state.projection_offset);
    ProbabilityMatrix p = soft_assign(z, state.centers, state.alpha);
    std::vector<int> labels(static_cast<std::size_t>(p.rows()));
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index k = 1; k < p.cols(); ++k) {
            if (p(i, k) > p(i, best)) {
                best = k;
            }
        }
        labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return {LabelVector(std::move(labels)), std::move(p)};
}

}  // namespace attnclust::dtc
