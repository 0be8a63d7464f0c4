#pragma once

#include <cstdint>
#include <vector>

#include "attnclust/core.hpp"

namespace attnclust::embedding {

/// Principal axes of a feature matrix.
struct PcaModel {
    RowVector mean;             // D
    Matrix components;          // D x K', orthonormal columns
    Vector explained_variance;  // K', descending

    Eigen::Index input_dim() const { return components.rows(); }
    Eigen::Index output_dim() const { return components.cols(); }
};

/// Top `target_dim` eigenvectors of the sample covariance (N-1 denominator).
/// Each component's sign is fixed so its largest-magnitude entry is positive.
/// Throws std::invalid_argument unless 1 <= target_dim <= min(N-1, D).
PcaModel pca_fit(const FeatureMatrix& x, int target_dim);

struct Projection {
    Matrix weights;   // D x K'
    RowVector offset; // K'
};

// Folds the PCA into a linear layer: weights = components,
// offset = mean * components, so project(x) = (x - mean) * components.
Projection init_projection(const PcaModel& pca);

// z = x * weights - offset, row by row.
Matrix project(const Matrix& x, const Matrix& weights, const RowVector& offset);

struct KmeansResult {
    Matrix centers;
    LabelVector assignment;
    // Sum of squared distances after each update step.
    std::vector<double> objective;
};

/// Lloyd's algorithm with k-means++ seeding. Stops when the assignment is
/// stable or after max_iters iterations. Ties go to the lowest center index.
/// An emptied cluster takes the point farthest from its current center.
/// Throws std::invalid_argument if k < 1, k > N or max_iters < 1.
KmeansResult kmeans(const FeatureMatrix& z, int k, std::uint64_t seed, int max_iters);

// Sum of squared distances from each point to its assigned center.
double kmeans_objective(const Matrix& z, const Matrix& centers, const LabelVector& assignment);

struct ProjectionGradients {
    Matrix weights;   // D x K'
    RowVector offset; // K'
};

// Chains dL/dz (N x K') through z = x * W - b.
ProjectionGradients projection_gradients(const FeatureMatrix& x, const ClusterState& state,
                                         const Matrix& upstream);

}  // namespace attnclust::embedding
