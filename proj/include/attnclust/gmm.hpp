#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace attnclust::grabcut {

using Color = Eigen::Vector3d;

inline constexpr double kDefaultCovarianceEpsilon = 1e-3;

struct GaussianComponent {
    double weight = 0.0;
    Color mean = Color::Zero();
    Eigen::Matrix3d covariance = Eigen::Matrix3d::Identity();
    // Derived from covariance by ColorGmm.
    Eigen::Matrix3d inverse = Eigen::Matrix3d::Identity();
    double log_det = 0.0;
};

/// RGB Gaussian mixture with hard-assignment costs.
///
/// The per-pixel cost of component k is
///   -log w_k + 1/2 log|S_k| + 1/2 (z - m_k)' S_k^-1 (z - m_k) + eps/2 tr(S_k^-1)
/// The trailing term pairs with the eps*I added to every fitted covariance:
/// with it, the closed-form learn step (counts, sample mean, sample
/// covariance + eps*I) is the exact minimiser of the summed assigned cost, so
/// assign/learn alternation never increases the energy.
class ColorGmm {
public:
    ColorGmm() = default;

    // Throws std::invalid_argument unless weights sum to 1 and every
    // covariance is positive definite.
    ColorGmm(std::vector<GaussianComponent> components, double epsilon);

    std::size_t size() const { return components_.size(); }
    const std::vector<GaussianComponent>& components() const { return components_; }
    double epsilon() const { return epsilon_; }

    double component_cost(std::size_t k, const Color& z) const;
    // Index of the cheapest component; ties go to the lowest index.
    std::size_t best_component(const Color& z) const;
    double min_cost(const Color& z) const;

    // Closed-form fit of each component to the pixels assigned to it.
    // Components that receive no pixels are dropped. Throws
    // std::invalid_argument if no pixels are given.
    static ColorGmm learn(std::span<const Color> pixels, std::span<const int> assignment,
                          int component_count, double epsilon);

private:
    std::vector<GaussianComponent> components_;
    double epsilon_ = kDefaultCovarianceEpsilon;
    std::vector<double> constant_; // -log w + 1/2 log|S| + eps/2 tr(S^-1)
};

/// Fits `component_count` components: seeded k-means++ then Lloyd iterations
/// provide the assignment, then one closed-form learn step. Empty clusters
/// are repaired by moving the point farthest from its center, so every
/// component keeps a positive weight. Deterministic for a given seed.
ColorGmm fit_gmm(std::span<const Color> pixels, int component_count, std::uint64_t seed,
                 double epsilon = kDefaultCovarianceEpsilon);

}  // namespace attnclust::grabcut
