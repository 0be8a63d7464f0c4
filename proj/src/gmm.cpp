#include "attnclust/gmm.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "attnclust/embedding.hpp"

namespace attnclust::grabcut {

ColorGmm::ColorGmm(std::vector<GaussianComponent> components, double epsilon)
    : components_(std::move(components)), epsilon_(epsilon) {
    if (components_.empty()) {
        throw std::invalid_argument("gmm needs at least one component");
    }
    double total = 0.0;
    for (auto& c : components_) {
        if (!(c.weight > 0.0) || c.weight > 1.0) {
            throw std::invalid_argument("gmm weight outside (0, 1]");
        }
        total += c.weight;
        const Eigen::LDLT<Eigen::Matrix3d> ldlt(c.covariance);
        const double det = c.covariance.determinant();
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || !(det > 0.0)) {
            throw std::invalid_argument("gmm covariance is not positive definite");
        }
        c.inverse = c.covariance.inverse();
        c.log_det = std::log(det);
        constant_.push_back(-std::log(c.weight) + 0.5 * c.log_det + 0.5 * epsilon_ * c.inverse.trace());
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw std::invalid_argument("gmm weights sum to " + std::to_string(total));
    }
}

double ColorGmm::component_cost(std::size_t k, const Color& z) const {
    const GaussianComponent& c = components_[k];
    const Color d = z - c.mean;
    return constant_[k] + 0.5 * d.dot(c.inverse * d);
}

std::size_t ColorGmm::best_component(const Color& z) const {
    std::size_t arg = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < components_.size(); ++k) {
        const double cost = component_cost(k, z);
        if (cost < best) {
            best = cost;
            arg = k;
        }
    }
    return arg;
}

double ColorGmm::min_cost(const Color& z) const {
    return component_cost(best_component(z), z);
}

ColorGmm ColorGmm::learn(std::span<const Color> pixels, std::span<const int> assignment,
                         int component_count, double epsilon) {
    if (pixels.empty()) {
        throw std::invalid_argument("cannot learn a gmm from zero pixels");
    }
    if (assignment.size() != pixels.size()) {
        throw std::invalid_argument("assignment size does not match pixel count");
    }
    const auto k_count = static_cast<std::size_t>(component_count);
    std::vector<double> counts(k_count, 0.0);
    std::vector<Color> sums(k_count, Color::Zero());
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        const auto k = static_cast<std::size_t>(assignment[i]);
        counts[k] += 1.0;
        sums[k] += pixels[i];
    }
    std::vector<Eigen::Matrix3d> scatter(k_count, Eigen::Matrix3d::Zero());
    std::vector<Color> means(k_count, Color::Zero());
    for (std::size_t k = 0; k < k_count; ++k) {
        if (counts[k] > 0.0) {
            means[k] = sums[k] / counts[k];
        }
    }
    // Two-pass scatter around the mean; stable for near-constant colors.
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        const auto k = static_cast<std::size_t>(assignment[i]);
        const Color d = pixels[i] - means[k];
        scatter[k] += d * d.transpose();
    }

    const double n = static_cast<double>(pixels.size());
    std::vector<GaussianComponent> components;
    for (std::size_t k = 0; k < k_count; ++k) {
        if (counts[k] == 0.0) {
            continue;
        }
        GaussianComponent c;
        c.weight = counts[k] / n;
        c.mean = means[k];
        c.covariance = scatter[k] / counts[k] + epsilon * Eigen::Matrix3d::Identity();
        components.push_back(c);
    }
    // Renormalise away the rounding in counts/n.
    double total = 0.0;
    for (const auto& c : components) {
        total += c.weight;
    }
    for (auto& c : components) {
        c.weight /= total;
    }
    return ColorGmm(std::move(components), epsilon);
}

ColorGmm fit_gmm(std::span<const Color> pixels, int component_count, std::uint64_t seed,
                 double epsilon) {
    if (component_count < 1) {
        throw std::invalid_argument("gmm component count must be positive");
    }
    if (pixels.size() < static_cast<std::size_t>(component_count)) {
        throw std::invalid_argument("insufficient samples: " + std::to_string(pixels.size()) +
                                    " pixels for " + std::to_string(component_count) +
                                    " components");
    }
    Matrix data(static_cast<Eigen::Index>(pixels.size()), 3);
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        data.row(static_cast<Eigen::Index>(i)) = pixels[i].transpose();
    }
    const auto clusters = embedding::kmeans(FeatureMatrix(std::move(data)), component_count, seed, 10);
    return ColorGmm::learn(pixels, clusters.assignment.values(), component_count, epsilon);
}

}  // namespace attnclust::grabcut
