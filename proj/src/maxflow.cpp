#include "attnclust/maxflow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>

namespace attnclust::grabcut {

PixelGraph::PixelGraph(int node_count) {
    if (node_count < 0) {
        throw std::invalid_argument("negative node count");
    }
    source_caps_.assign(static_cast<std::size_t>(node_count), 0.0);
    sink_caps_.assign(static_cast<std::size_t>(node_count), 0.0);
}

namespace {

void check_capacity(double c) {
    if (!std::isfinite(c) || c < 0.0) {
        throw std::invalid_argument("capacity must be finite and non-negative, got " +
                                    std::to_string(c));
    }
}

}  // namespace

void PixelGraph::set_terminal_capacities(int node, double source_cap, double sink_cap) {
    if (node < 0 || node >= node_count()) {
        throw std::out_of_range("node index out of range");
    }
    check_capacity(source_cap);
    check_capacity(sink_cap);
    source_caps_[node] = source_cap;
    sink_caps_[node] = sink_cap;
}

void PixelGraph::add_nlink(int u, int v, double capacity) {
    if (u < 0 || v < 0 || u >= node_count() || v >= node_count() || u == v) {
        throw std::out_of_range("invalid n-link endpoints");
    }
    check_capacity(capacity);
    nlinks_.push_back({u, v, capacity});
}

double PixelGraph::cut_capacity(std::span<const std::uint8_t> source_side) const {
    if (source_side.size() != source_caps_.size()) {
        throw std::invalid_argument("partition size does not match node count");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < source_side.size(); ++i) {
        total += source_side[i] ? sink_caps_[i] : source_caps_[i];
    }
    for (const NLink& e : nlinks_) {
        if ((source_side[e.u] != 0) != (source_side[e.v] != 0)) {
            total += e.capacity;
        }
    }
    return total;
}

namespace {

// Dinic's algorithm on a residual graph stored as paired arcs.
class Dinic {
public:
    Dinic(int nodes, double eps) : head_(nodes, -1), level_(nodes), cursor_(nodes), eps_(eps) {}

    // Adds arc u->v with capacity cap and its reverse v->u with capacity rev_cap.
    void add_pair(int u, int v, double cap, double rev_cap) {
        arcs_.push_back({v, head_[u], cap});
        head_[u] = static_cast<int>(arcs_.size()) - 1;
        arcs_.push_back({u, head_[v], rev_cap});
        head_[v] = static_cast<int>(arcs_.size()) - 1;
    }

    double run(int s, int t) {
        double flow = 0.0;
        while (build_levels(s, t)) {
            for (std::size_t i = 0; i < head_.size(); ++i) {
                cursor_[i] = head_[i];
            }
            flow += blocking_flow(s, t);
        }
        return flow;
    }

    std::vector<std::uint8_t> reachable_from(int s) const {
        std::vector<std::uint8_t> seen(head_.size(), 0);
        std::vector<int> stack{s};
        seen[s] = 1;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (int a = head_[u]; a != -1; a = arcs_[a].next) {
                if (arcs_[a].residual > eps_ && !seen[arcs_[a].to]) {
                    seen[arcs_[a].to] = 1;
                    stack.push_back(arcs_[a].to);
                }
            }
        }
        return seen;
    }

private:
    struct Arc {
        int to;
        int next;
        double residual;
    };

    bool build_levels(int s, int t) {
        std::fill(level_.begin(), level_.end(), -1);
        std::queue<int> queue;
        level_[s] = 0;
        queue.push(s);
        while (!queue.empty()) {
            const int u = queue.front();
            queue.pop();
            for (int a = head_[u]; a != -1; a = arcs_[a].next) {
                const int v = arcs_[a].to;
                if (level_[v] < 0 && arcs_[a].residual > eps_) {
                    level_[v] = level_[u] + 1;
                    queue.push(v);
                }
            }
        }
        return level_[t] >= 0;
    }

    // Iterative DFS over the level graph; path holds arc indices from s.
    double blocking_flow(int s, int t) {
        double pushed = 0.0;
        std::vector<int> path;
        while (true) {
            const int u = path.empty() ? s : arcs_[path.back()].to;
            if (u == t) {
                double bottleneck = std::numeric_limits<double>::infinity();
                for (int a : path) {
                    bottleneck = std::min(bottleneck, arcs_[a].residual);
                }
                std::size_t cut_at = path.size();
                for (std::size_t i = 0; i < path.size(); ++i) {
                    Arc& fwd = arcs_[path[i]];
                    fwd.residual -= bottleneck;
                    arcs_[path[i] ^ 1].residual += bottleneck;
                    if (fwd.residual <= eps_ && cut_at == path.size()) {
                        cut_at = i;
                    }
                }
                pushed += bottleneck;
                path.resize(cut_at);
                continue;
            }
            int& a = cursor_[u];
            while (a != -1 &&
                   !(arcs_[a].residual > eps_ && level_[arcs_[a].to] == level_[u] + 1)) {
                a = arcs_[a].next;
            }
            if (a != -1) {
                path.push_back(a);
                continue;
            }
            if (u == s) {
                break;
            }
            // Dead end: retire u from the level graph and back up.
            level_[u] = -1;
            path.pop_back();
            const int prev = path.empty() ? s : arcs_[path.back()].to;
            cursor_[prev] = arcs_[cursor_[prev]].next;
        }
        return pushed;
    }

    std::vector<int> head_;
    std::vector<Arc> arcs_;
    std::vector<int> level_;
    std::vector<int> cursor_;
    double eps_;
};

}  // namespace

MinCut max_flow_min_cut(const PixelGraph& graph) {
    const int n = graph.node_count();
    const int source = n;
    const int sink = n + 1;

    double scale = 0.0;
    for (int i = 0; i < n; ++i) {
        scale = std::max({scale, graph.source_capacity(i), graph.sink_capacity(i)});
    }
    for (const NLink& e : graph.nlinks()) {
        scale = std::max(scale, e.capacity);
    }
    const double eps = 1e-12 * std::max(1.0, scale);

    Dinic dinic(n + 2, eps);
    for (int i = 0; i < n; ++i) {
        if (graph.source_capacity(i) > 0.0) {
            dinic.add_pair(source, i, graph.source_capacity(i), 0.0);
        }
        if (graph.sink_capacity(i) > 0.0) {
            dinic.add_pair(i, sink, graph.sink_capacity(i), 0.0);
        }
    }
    for (const NLink& e : graph.nlinks()) {
        if (e.capacity > 0.0) {
            dinic.add_pair(e.u, e.v, e.capacity, e.capacity);
        }
    }

    MinCut result;
    result.flow = dinic.run(source, sink);
    std::vector<std::uint8_t> reach = dinic.reachable_from(source);
    result.source_side.assign(reach.begin(), reach.begin() + n);
    return result;
}

}  // namespace attnclust::grabcut
