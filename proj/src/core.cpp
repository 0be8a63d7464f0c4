#include "attnclust/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace attnclust {

namespace {

std::string describe_probability_error(InvalidProbabilityError::Kind kind, Eigen::Index row,
                                       Eigen::Index col, double value) {
    std::ostringstream out;
    out.precision(17);
    switch (kind) {
    case InvalidProbabilityError::Kind::RowSum:
        out << "row " << row << " sums to " << value << ", expected 1";
        break;
    case InvalidProbabilityError::Kind::NegativeEntry:
        out << "negative entry " << value << " at row " << row << ", column " << col;
        break;
    case InvalidProbabilityError::Kind::NonFinite:
        out << "non-finite entry at row " << row << ", column " << col;
        break;
    }
    return out.str();
}

}  // namespace

FeatureMatrix::FeatureMatrix(Matrix data) : data_(std::move(data)) {
    if (data_.rows() < 1 || data_.cols() < 1) {
        throw std::invalid_argument("feature matrix must have at least one row and one column");
    }
    for (Eigen::Index i = 0; i < data_.rows(); ++i) {
        for (Eigen::Index j = 0; j < data_.cols(); ++j) {
            if (!std::isfinite(data_(i, j))) {
                throw DataError("non-finite feature at row " + std::to_string(i) + ", column " +
                                std::to_string(j));
            }
        }
    }
}

InvalidProbabilityError::InvalidProbabilityError(Kind kind, Eigen::Index row, Eigen::Index col,
                                                 double value)
    : DataError(describe_probability_error(kind, row, col, value)),
      kind_(kind),
      row_(row),
      col_(col),
      value_(value) {}

void validate_probability_matrix(const Matrix& m) {
    if (m.rows() < 1 || m.cols() < 1) {
        throw std::invalid_argument("probability matrix must be at least 1x1");
    }
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        double sum = 0.0;
        for (Eigen::Index k = 0; k < m.cols(); ++k) {
            const double v = m(i, k);
            if (!std::isfinite(v)) {
                throw InvalidProbabilityError(InvalidProbabilityError::Kind::NonFinite, i, k, v);
            }
            if (v < 0.0) {
                throw InvalidProbabilityError(InvalidProbabilityError::Kind::NegativeEntry, i, k, v);
            }
            sum += v;
        }
        if (std::abs(sum - 1.0) > kProbabilityTolerance) {
            throw InvalidProbabilityError(InvalidProbabilityError::Kind::RowSum, i, -1, sum);
        }
    }
}

ProbabilityMatrix::ProbabilityMatrix(Matrix data) : data_(std::move(data)) {
    validate_probability_matrix(data_);
}

Matrix normalize_rows(Matrix m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const double sum = m.row(i).sum();
        if (sum > 0.0) {
            m.row(i) /= sum;
        }
    }
    return m;
}

void ClusterState::validate() const {
    if (centers.rows() < 2) {
        throw std::invalid_argument("cluster state needs at least two clusters");
    }
    if (centers.cols() < 1) {
        throw std::invalid_argument("cluster centers have zero embedded dimensions");
    }
    if (projection_weights.cols() != centers.cols() ||
        projection_offset.size() != centers.cols()) {
        throw std::invalid_argument("projection shape does not match embedded dimension " +
                                    std::to_string(centers.cols()));
    }
    if (projection_weights.rows() < 1) {
        throw std::invalid_argument("projection has zero input dimensions");
    }
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
        throw std::invalid_argument("alpha must be positive and finite");
    }
    if (!centers.allFinite() || !projection_weights.allFinite() || !projection_offset.allFinite()) {
        throw std::invalid_argument("cluster state holds non-finite parameters");
    }
}

LabelVector::LabelVector(std::vector<int> labels) : labels_(std::move(labels)) {
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i] < 0) {
            throw DataError("negative label " + std::to_string(labels_[i]) + " at index " +
                            std::to_string(i));
        }
    }
}

std::size_t LabelVector::distinct_count() const {
    std::vector<int> sorted = labels_;
    std::sort(sorted.begin(), sorted.end());
    return static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
}

LabelVector LabelVector::remap_contiguous() const {
    std::vector<int> ids = labels_;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::vector<int> out(labels_.size());
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        out[i] = static_cast<int>(std::lower_bound(ids.begin(), ids.end(), labels_[i]) - ids.begin());
    }
    return LabelVector(std::move(out));
}

}  // namespace attnclust
