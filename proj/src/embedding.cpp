#include "attnclust/embedding.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace attnclust::embedding {

PcaModel pca_fit(const FeatureMatrix& x, int target_dim) {
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    if (target_dim < 1 || target_dim > std::min<Eigen::Index>(n - 1, d)) {
        throw std::invalid_argument("pca target dimension " + std::to_string(target_dim) +
                                    " outside [1, min(N-1, D)] = [1, " +
                                    std::to_string(std::min<Eigen::Index>(n - 1, d)) + "]");
    }

    PcaModel model;
    model.mean = x.data().colwise().mean();
    const Matrix centered = x.data().rowwise() - model.mean;
    const Eigen::MatrixXd cov =
        (centered.transpose() * centered) / static_cast<double>(n - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("covariance eigendecomposition failed");
    }
    // Eigen returns ascending eigenvalues.
    model.components.resize(d, target_dim);
    model.explained_variance.resize(target_dim);
    for (int c = 0; c < target_dim; ++c) {
        const Eigen::Index src = d - 1 - c;
        Vector axis = solver.eigenvectors().col(src);
        Eigen::Index peak = 0;
        axis.cwiseAbs().maxCoeff(&peak);
        if (axis(peak) < 0.0) {
            axis = -axis;
        }
        model.components.col(c) = axis;
        model.explained_variance(c) = std::max(0.0, solver.eigenvalues()(src));
    }
    return model;
}

Projection init_projection(const PcaModel& pca) {
    return {pca.components, pca.mean * pca.components};
}

Matrix project(const Matrix& x, const Matrix& weights, const RowVector& offset) {
    if (x.cols() != weights.rows() || weights.cols() != offset.size()) {
        throw std::invalid_argument("projection shape mismatch");
    }
    Matrix z = x * weights;
    z.rowwise() -= offset;
    return z;
}

namespace {

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::vector<int> nearest_centers(const Matrix& z, const Matrix& centers) {
    std::vector<int> out(static_cast<std::size_t>(z.rows()));
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (Eigen::Index k = 0; k < centers.rows(); ++k) {
            const double dist = (z.row(i) - centers.row(k)).squaredNorm();
            if (dist < best) {
                best = dist;
                arg = static_cast<int>(k);
            }
        }
        out[static_cast<std::size_t>(i)] = arg;
    }
    return out;
}

Matrix kmeanspp_seed(const Matrix& z, int k, std::mt19937_64& rng) {
    const Eigen::Index n = z.rows();
    Matrix centers(k, z.cols());
    std::vector<char> chosen(static_cast<std::size_t>(n), 0);
    std::vector<double> dist(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());

    Eigen::Index first = std::min<Eigen::Index>(
        static_cast<Eigen::Index>(uniform01(rng) * static_cast<double>(n)), n - 1);
    for (int c = 0; c < k; ++c) {
        Eigen::Index pick = first;
        if (c > 0) {
            double total = 0.0;
            for (double v : dist) {
                total += v;
            }
            if (total > 0.0) {
                const double target = uniform01(rng) * total;
                double acc = 0.0;
                pick = -1;
                for (Eigen::Index i = 0; i < n; ++i) {
                    acc += dist[static_cast<std::size_t>(i)];
                    if (dist[static_cast<std::size_t>(i)] > 0.0 && acc > target) {
                        pick = i;
                        break;
                    }
                }
                if (pick < 0) {
                    // Rounding left target at the very end of the cumulative sum.
                    for (Eigen::Index i = n - 1; i >= 0; --i) {
                        if (dist[static_cast<std::size_t>(i)] > 0.0) {
                            pick = i;
                            break;
                        }
                    }
                }
            } else {
                // Every point coincides with a chosen center.
                pick = 0;
                while (chosen[static_cast<std::size_t>(pick)]) {
                    ++pick;
                }
            }
        }
        chosen[static_cast<std::size_t>(pick)] = 1;
        centers.row(c) = z.row(pick);
        for (Eigen::Index i = 0; i < n; ++i) {
            auto& d = dist[static_cast<std::size_t>(i)];
            d = chosen[static_cast<std::size_t>(i)] ? 0.0
                                                    : std::min(d, (z.row(i) - z.row(pick)).squaredNorm());
        }
    }
    return centers;
}

// Gives every empty cluster the point farthest from its own center (taken
// from a cluster with more than one member) and moves the center onto it.
void repair_empty(const Matrix& z, Matrix& centers, std::vector<int>& assignment) {
    const int k = static_cast<int>(centers.rows());
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (int a : assignment) {
        ++sizes[static_cast<std::size_t>(a)];
    }
    for (int c = 0; c < k; ++c) {
        if (sizes[static_cast<std::size_t>(c)] > 0) {
            continue;
        }
        double worst = -1.0;
        Eigen::Index arg = -1;
        for (Eigen::Index i = 0; i < z.rows(); ++i) {
            const int own = assignment[static_cast<std::size_t>(i)];
            if (sizes[static_cast<std::size_t>(own)] < 2) {
                continue;
            }
            const double dist = (z.row(i) - centers.row(own)).squaredNorm();
            if (dist > worst) {
                worst = dist;
                arg = i;
            }
        }
        if (arg < 0) {
            break;  // unreachable while k <= N
        }
        --sizes[static_cast<std::size_t>(assignment[static_cast<std::size_t>(arg)])];
        assignment[static_cast<std::size_t>(arg)] = c;
        sizes[static_cast<std::size_t>(c)] = 1;
        centers.row(c) = z.row(arg);
    }
}

Matrix cluster_means(const Matrix& z, const std::vector<int>& assignment, const Matrix& previous) {
    Matrix sums = Matrix::Zero(previous.rows(), previous.cols());
    std::vector<int> counts(static_cast<std::size_t>(previous.rows()), 0);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const int a = assignment[static_cast<std::size_t>(i)];
        sums.row(a) += z.row(i);
        ++counts[static_cast<std::size_t>(a)];
    }
    for (Eigen::Index c = 0; c < sums.rows(); ++c) {
        if (counts[static_cast<std::size_t>(c)] > 0) {
            sums.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
        } else {
            sums.row(c) = previous.row(c);
        }
    }
    return sums;
}

}  // namespace

double kmeans_objective(const Matrix& z, const Matrix& centers, const LabelVector& assignment) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        total += (z.row(i) - centers.row(assignment[static_cast<std::size_t>(i)])).squaredNorm();
    }
    return total;
}

KmeansResult kmeans(const FeatureMatrix& features, int k, std::uint64_t seed, int max_iters) {
    const Matrix& z = features.data();
    if (k < 1 || k > z.rows()) {
        throw std::invalid_argument("k-means needs 1 <= k <= N, got k=" + std::to_string(k) +
                                    ", N=" + std::to_string(z.rows()));
    }
    if (max_iters < 1) {
        throw std::invalid_argument("k-means needs at least one iteration");
    }

    std::mt19937_64 rng(seed);
    Matrix centers = kmeanspp_seed(z, k, rng);
    std::vector<int> assignment = nearest_centers(z, centers);
    repair_empty(z, centers, assignment);

    KmeansResult result;
    for (int iter = 0; iter < max_iters; ++iter) {
        centers = cluster_means(z, assignment, centers);
        std::vector<int> next = nearest_centers(z, centers);
        repair_empty(z, centers, next);
        const bool stable = next == assignment;
        assignment = std::move(next);
        result.objective.push_back(kmeans_objective(z, centers, LabelVector(assignment)));
        if (stable) {
            break;
        }
    }
    result.centers = std::move(centers);
    result.assignment = LabelVector(std::move(assignment));
    return result;
}

ProjectionGradients projection_gradients(const FeatureMatrix& x, const ClusterState& state,
                                         const Matrix& upstream) {
    if (x.cols() != state.feature_dim() || upstream.rows() != x.rows() ||
        upstream.cols() != state.embedded_dim()) {
        throw std::invalid_argument("projection gradient shape mismatch");
    }
    return {x.data().transpose() * upstream, -upstream.colwise().sum()};
}

}  // namespace attnclust::embedding
