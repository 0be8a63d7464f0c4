#include "attnclust/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace attnclust::metrics {

std::vector<std::int64_t> ContingencyTable::row_sums() const {
    std::vector<std::int64_t> out(pred_clusters(), 0);
    for (std::size_t i = 0; i < counts.size(); ++i) {
        for (std::int64_t c : counts[i]) {
            out[i] += c;
        }
    }
    return out;
}

std::vector<std::int64_t> ContingencyTable::col_sums() const {
    std::vector<std::int64_t> out(true_classes(), 0);
    for (const auto& row : counts) {
        for (std::size_t j = 0; j < row.size(); ++j) {
            out[j] += row[j];
        }
    }
    return out;
}

ContingencyTable contingency(const LabelVector& pred, const LabelVector& truth) {
    if (pred.size() != truth.size()) {
        throw std::invalid_argument("label vectors differ in length: " + std::to_string(pred.size()) +
                                    " vs " + std::to_string(truth.size()));
    }
    const LabelVector a = pred.remap_contiguous();
    const LabelVector b = truth.remap_contiguous();
    const std::size_t rows = a.distinct_count();
    const std::size_t cols = b.distinct_count();
    ContingencyTable table;
    table.counts.assign(rows, std::vector<std::int64_t>(cols, 0));
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++table.counts[static_cast<std::size_t>(a[i])][static_cast<std::size_t>(b[i])];
    }
    table.n = static_cast<std::int64_t>(a.size());
    return table;
}

std::vector<int> hungarian_min_cost(const std::vector<std::vector<double>>& cost) {
    const std::size_t rows = cost.size();
    const std::size_t cols = rows == 0 ? 0 : cost.front().size();
    for (const auto& r : cost) {
        if (r.size() != cols) {
            throw std::invalid_argument("cost matrix rows differ in length");
        }
    }
    const std::size_t n = std::max(rows, cols);
    if (n == 0) {
        return {};
    }
    auto at = [&](std::size_t i, std::size_t j) {
        return (i < rows && j < cols) ? cost[i][j] : 0.0;
    };

    // Shortest augmenting paths with potentials; 1-based with column 0 as
    // the virtual start.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0);
    std::vector<double> v(n + 1, 0.0);
    std::vector<std::size_t> match(n + 1, 0); // column -> row
    std::vector<std::size_t> way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        match[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = match[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) {
                    continue;
                }
                const double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<int> result(rows, -1);
    for (std::size_t j = 1; j <= n; ++j) {
        const std::size_t i = match[j];
        if (i >= 1 && i - 1 < rows && j - 1 < cols) {
            result[i - 1] = static_cast<int>(j - 1);
        }
    }
    return result;
}

double clustering_accuracy(const ContingencyTable& table) {
    if (table.n < 1) {
        throw std::invalid_argument("accuracy of an empty labelling is undefined");
    }
    std::vector<std::vector<double>> cost(table.pred_clusters(),
                                          std::vector<double>(table.true_classes(), 0.0));
    for (std::size_t i = 0; i < cost.size(); ++i) {
        for (std::size_t j = 0; j < cost[i].size(); ++j) {
            cost[i][j] = -static_cast<double>(table.counts[i][j]);
        }
    }
    const std::vector<int> match = hungarian_min_cost(cost);
    std::int64_t agree = 0;
    for (std::size_t i = 0; i < match.size(); ++i) {
        if (match[i] >= 0) {
            agree += table.counts[i][static_cast<std::size_t>(match[i])];
        }
    }
    return static_cast<double>(agree) / static_cast<double>(table.n);
}

double clustering_accuracy(const LabelVector& pred, const LabelVector& truth) {
    if (pred.empty() && truth.empty()) {
        throw std::invalid_argument("accuracy of an empty labelling is undefined");
    }
    return clustering_accuracy(contingency(pred, truth));
}

namespace {

// Summed smallest first so the result does not depend on label order.
double sorted_sum(std::vector<double> terms) {
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) {
        s += t;
    }
    return s;
}

double entropy(const std::vector<std::int64_t>& sizes, double n) {
    std::vector<double> terms;
    for (std::int64_t s : sizes) {
        if (s > 0) {
            const double p = static_cast<double>(s) / n;
            terms.push_back(-p * std::log(p));
        }
    }
    return sorted_sum(std::move(terms));
}

// Same partition up to renaming: every row and column has one nonzero cell.
bool equivalent(const ContingencyTable& t) {
    if (t.pred_clusters() != t.true_classes()) {
        return false;
    }
    std::vector<int> col_hits(t.true_classes(), 0);
    for (const auto& row : t.counts) {
        int hits = 0;
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (row[j] > 0) {
                ++hits;
                ++col_hits[j];
            }
        }
        if (hits != 1) {
            return false;
        }
    }
    return std::all_of(col_hits.begin(), col_hits.end(), [](int h) { return h == 1; });
}

std::int64_t pairs(std::int64_t m) { return m * (m - 1) / 2; }

}  // namespace

double nmi(const LabelVector& pred, const LabelVector& truth, NmiNormalization norm) {
    const ContingencyTable t = contingency(pred, truth);
    if (t.n < 1) {
        throw std::invalid_argument("nmi of an empty labelling is undefined");
    }
    if (equivalent(t)) {
        return 1.0;
    }
    const double n = static_cast<double>(t.n);
    const auto a = t.row_sums();
    const auto b = t.col_sums();
    const double ha = entropy(a, n);
    const double hb = entropy(b, n);
    if (ha == 0.0 || hb == 0.0) {
        return 0.0;
    }
    std::vector<double> terms;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            const auto c = t.counts[i][j];
            if (c > 0) {
                const double cd = static_cast<double>(c);
                terms.push_back(cd / n * std::log(n * cd / (static_cast<double>(a[i]) * static_cast<double>(b[j]))));
            }
        }
    }
    const double mi = sorted_sum(std::move(terms));
    const double denom = norm == NmiNormalization::Geometric ? std::sqrt(ha * hb) : 0.5 * (ha + hb);
    return std::clamp(mi / denom, 0.0, 1.0);
}

double ari(const LabelVector& pred, const LabelVector& truth) {
    const ContingencyTable t = contingency(pred, truth);
    if (t.n < 2) {
        throw std::invalid_argument("ari needs at least two samples");
    }
    std::int64_t index = 0;
    for (const auto& row : t.counts) {
        for (std::int64_t c : row) {
            index += pairs(c);
        }
    }
    std::int64_t sum_a = 0;
    for (std::int64_t s : t.row_sums()) {
        sum_a += pairs(s);
    }
    std::int64_t sum_b = 0;
    for (std::int64_t s : t.col_sums()) {
        sum_b += pairs(s);
    }
    // (index - expected) / (max - expected) scaled by 2 * pairs(n): an exact
    // integer ratio, so the only rounding is the final division.
    using Wide = __int128;
    const Wide total = pairs(t.n);
    const Wide num = 2 * Wide{index} * total - 2 * Wide{sum_a} * sum_b;
    const Wide den = Wide{sum_a + sum_b} * total - 2 * Wide{sum_a} * sum_b;
    if (den == 0) {
        return 1.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}

Scores evaluate(const LabelVector& pred, const LabelVector& truth, NmiNormalization norm) {
    return {clustering_accuracy(pred, truth), nmi(pred, truth, norm), ari(pred, truth)};
}

}  // namespace attnclust::metrics
