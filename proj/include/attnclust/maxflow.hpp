#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace attnclust::grabcut {

struct NLink {
    int u = 0;
    int v = 0;
    double capacity = 0.0;
};

/// Pixel nodes plus implicit source/sink terminals. Every pixel carries a
/// source t-link and a sink t-link; n-links are undirected (the same capacity
/// in both directions).
class PixelGraph {
public:
    explicit PixelGraph(int node_count);

    int node_count() const { return static_cast<int>(source_caps_.size()); }

    void set_terminal_capacities(int node, double source_cap, double sink_cap);
    void add_nlink(int u, int v, double capacity);

    double source_capacity(int node) const { return source_caps_[node]; }
    double sink_capacity(int node) const { return sink_caps_[node]; }
    const std::vector<NLink>& nlinks() const { return nlinks_; }

    // Capacity of the cut that puts nodes with source_side[i] != 0 with the
    // source and the rest with the sink.
    double cut_capacity(std::span<const std::uint8_t> source_side) const;

private:
    std::vector<double> source_caps_;
    std::vector<double> sink_caps_;
    std::vector<NLink> nlinks_;
};

struct MinCut {
    std::vector<std::uint8_t> source_side; // 1 = source (foreground) side
    double flow = 0.0;
};

// Maximum s-t flow and the minimum cut reachable from the source in the
// final residual graph.
MinCut max_flow_min_cut(const PixelGraph& graph);

}  // namespace attnclust::grabcut
