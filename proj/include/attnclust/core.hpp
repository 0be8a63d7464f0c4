#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

#include "attnclust/errors.hpp"

namespace attnclust {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// Exact equality including shape; Eigen's operator== asserts on shape mismatch.
template <typename A, typename B>
bool identical(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

// Absolute tolerance on each row sum of a probability matrix.
inline constexpr double kProbabilityTolerance = 1e-9;

/// N x D matrix of extracted features; every entry finite.
class FeatureMatrix {
public:
    explicit FeatureMatrix(Matrix data);

    Eigen::Index rows() const { return data_.rows(); }
    Eigen::Index cols() const { return data_.cols(); }
    const Matrix& data() const { return data_; }

    friend bool operator==(const FeatureMatrix& a, const FeatureMatrix& b) {
        return identical(a.data_, b.data_);
    }

private:
    Matrix data_;
};

// Raised by validate_probability_matrix; carries the first offending row.
class InvalidProbabilityError : public DataError {
public:
    enum class Kind { RowSum, NegativeEntry, NonFinite };

    InvalidProbabilityError(Kind kind, Eigen::Index row, Eigen::Index col, double value);

    Kind kind() const { return kind_; }
    Eigen::Index row() const { return row_; }
    // Column of the offending entry; -1 for row-sum violations.
    Eigen::Index col() const { return col_; }
    // The row sum for RowSum, the entry itself otherwise.
    double value() const { return value_; }

private:
    Kind kind_;
    Eigen::Index row_;
    Eigen::Index col_;
    double value_;
};

/// Checks that every entry is finite and non-negative and every row sums to
/// one within kProbabilityTolerance. Throws InvalidProbabilityError naming the
/// first offending row.
void validate_probability_matrix(const Matrix& m);

/// Row-stochastic N x K matrix: p(k|i), q(k|i), p'(k|i) or an ensemble.
class ProbabilityMatrix {
public:
    explicit ProbabilityMatrix(Matrix data);

    Eigen::Index rows() const { return data_.rows(); }
    Eigen::Index cols() const { return data_.cols(); }
    const Matrix& data() const { return data_; }
    double operator()(Eigen::Index i, Eigen::Index k) const { return data_(i, k); }

    friend bool operator==(const ProbabilityMatrix& a, const ProbabilityMatrix& b) {
        return identical(a.data_, b.data_);
    }

private:
    Matrix data_;
};

// Divides every row by its sum. Rows with zero mass are left at zero.
Matrix normalize_rows(Matrix m);

/// Cluster centers, the trainable linear projection and the Student's t
/// degrees of freedom. Embedded points are z = x * projection_weights - projection_offset.
struct ClusterState {
    Matrix centers;              // K x K'
    Matrix projection_weights;   // D x K'
    RowVector projection_offset; // K'
    double alpha = 1.0;

    Eigen::Index cluster_count() const { return centers.rows(); }
    Eigen::Index embedded_dim() const { return centers.cols(); }
    Eigen::Index feature_dim() const { return projection_weights.rows(); }

    // Throws std::invalid_argument on shape mismatch, non-finite values,
    // alpha <= 0 or fewer than two clusters.
    void validate() const;

    friend bool operator==(const ClusterState& a, const ClusterState& b) {
        return identical(a.centers, b.centers) &&
               identical(a.projection_weights, b.projection_weights) &&
               identical(a.projection_offset, b.projection_offset) && a.alpha == b.alpha;
    }
};

/// Non-negative integer ids, one per sample.
class LabelVector {
public:
    LabelVector() = default;
    explicit LabelVector(std::vector<int> labels);

    std::size_t size() const { return labels_.size(); }
    bool empty() const { return labels_.empty(); }
    int operator[](std::size_t i) const { return labels_[i]; }
    std::span<const int> values() const { return labels_; }
    auto begin() const { return labels_.begin(); }
    auto end() const { return labels_.end(); }

    // Number of distinct ids.
    std::size_t distinct_count() const;
    // Renames ids to 0..M-1 in increasing order of the original id.
    LabelVector remap_contiguous() const;

    friend bool operator==(const LabelVector&, const LabelVector&) = default;

private:
    std::vector<int> labels_;
};

struct LossBreakdown {
    double l1 = 0.0;    // KL(q || p)
    double l2 = 0.0;    // weighted consistency term
    double total = 0.0; // l1 + l2
    double omega = 0.0; // ramp-up weight applied to l2

    static LossBreakdown make(double l1, double l2, double omega) {
        return {l1, l2, l1 + l2, omega};
    }

    friend bool operator==(const LossBreakdown&, const LossBreakdown&) = default;
};

}  // namespace attnclust
