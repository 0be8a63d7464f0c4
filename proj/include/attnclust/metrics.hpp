#pragma once

#include <cstdint>
#include <vector>

#include "attnclust/core.hpp"

namespace attnclust::metrics {

/// Counts of samples per (predicted cluster, true class) pair. Ids of both
/// label vectors are renamed to contiguous ranges in increasing order.
struct ContingencyTable {
    std::vector<std::vector<std::int64_t>> counts; // K_pred x K_true
    std::int64_t n = 0;

    std::size_t pred_clusters() const { return counts.size(); }
    std::size_t true_classes() const { return counts.empty() ? 0 : counts.front().size(); }
    std::vector<std::int64_t> row_sums() const;
    std::vector<std::int64_t> col_sums() const;
};

// Throws std::invalid_argument on length mismatch.
ContingencyTable contingency(const LabelVector& pred, const LabelVector& truth);

/// Optimal one-to-one assignment on a rectangular cost matrix (rows <= or >
/// cols both allowed; the smaller side is matched completely). Returns for
/// every row its column or -1. Minimises total cost.
std::vector<int> hungarian_min_cost(const std::vector<std::vector<double>>& cost);

// Best one-to-one matching agreement as a fraction of n.
double clustering_accuracy(const ContingencyTable& table);
double clustering_accuracy(const LabelVector& pred, const LabelVector& truth);

enum class NmiNormalization { Geometric, Arithmetic };

/// I(pred; truth) / sqrt(H(pred) H(truth)) (or the arithmetic mean of the
/// entropies), natural logs. Equivalent partitions give exactly 1; otherwise
/// a zero entropy on either side gives 0.
double nmi(const LabelVector& pred, const LabelVector& truth,
           NmiNormalization norm = NmiNormalization::Geometric);

/// Adjusted Rand index from pair counts; 1.0 when the expected index equals
/// its maximum. Throws std::invalid_argument when n < 2.
double ari(const LabelVector& pred, const LabelVector& truth);

struct Scores {
    double accuracy = 0.0;
    double nmi = 0.0;
    double ari = 0.0;
};

Scores evaluate(const LabelVector& pred, const LabelVector& truth,
                NmiNormalization norm = NmiNormalization::Geometric);

}  // namespace attnclust::metrics
