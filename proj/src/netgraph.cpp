#include "dcgrid/netgraph.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace dcgrid {

Topology::Topology(int vertex_count) : n_(vertex_count) {
    if (vertex_count <= 0) throw std::invalid_argument("topology needs at least one vertex");
}

Topology::Topology(int vertex_count, const std::vector<Edge>& edges) : Topology(vertex_count) {
    for (const auto& e : edges) add_edge(e.k, e.l, e.weight);
}

void Topology::add_edge(int k, int l, double weight) {
    if (k < 1 || l < 1 || k > n_ || l > n_)
        throw std::invalid_argument("edge " + std::to_string(k) + "-" + std::to_string(l) + " references unknown vertex");
    if (k == l) throw std::invalid_argument("self-loop at vertex " + std::to_string(k));
    if (!(weight > 0.0)) throw std::invalid_argument("edge weight must be positive");
    if (has_edge(k, l))
        throw std::invalid_argument("duplicate edge " + std::to_string(k) + "-" + std::to_string(l));
    edges_.push_back({std::min(k, l), std::max(k, l), weight});
}

bool Topology::has_edge(int k, int l) const {
    int a = std::min(k, l), b = std::max(k, l);
    return std::any_of(edges_.begin(), edges_.end(), [&](const Edge& e) { return e.k == a && e.l == b; });
}

Topology Topology::restricted(const std::vector<bool>& keep) const {
    Topology r(n_);
    for (const auto& e : edges_)
        if (keep[e.k - 1] && keep[e.l - 1]) r.edges_.push_back(e);
    return r;
}

Eigen::MatrixXd incidence_matrix(const Topology& t) {
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(t.vertex_count(), t.edge_count());
    for (int e = 0; e < t.edge_count(); ++e) {
        E(t.source(e) - 1, e) = -1.0;
        E(t.sink(e) - 1, e) = 1.0;
    }
    return E;
}

Eigen::MatrixXd laplacian(const Topology& t) {
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(t.vertex_count(), t.vertex_count());
    for (const auto& e : t.edges()) {
        int a = e.k - 1, b = e.l - 1;
        L(a, a) += e.weight;
        L(b, b) += e.weight;
        L(a, b) -= e.weight;
        L(b, a) -= e.weight;
    }
    return L;
}

std::vector<int> components(const Topology& t, const std::vector<bool>& active) {
    const int n = t.vertex_count();
    std::vector<std::vector<int>> adj(n);
    for (const auto& e : t.edges()) {
        if (!active[e.k - 1] || !active[e.l - 1]) continue;
        adj[e.k - 1].push_back(e.l - 1);
        adj[e.l - 1].push_back(e.k - 1);
    }
    std::vector<int> label(n, -1);
    int next = 0;
    std::vector<int> stack;
    for (int s = 0; s < n; ++s) {
        if (!active[s] || label[s] >= 0) continue;
        label[s] = next;
        stack.assign(1, s);
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            for (int w : adj[v])
                if (label[w] < 0) {
                    label[w] = next;
                    stack.push_back(w);
                }
        }
        ++next;
    }
    return label;
}

bool is_connected(const Topology& t, const std::vector<int>& subset) {
    if (subset.empty()) throw std::invalid_argument("subset must be nonempty");
    std::vector<bool> active(t.vertex_count(), false);
    for (int v : subset) {
        if (v < 1 || v > t.vertex_count())
            throw std::invalid_argument("subset references unknown vertex " + std::to_string(v));
        active[v - 1] = true;
    }
    auto label = components(t, active);
    int first = label[subset.front() - 1];
    return std::all_of(subset.begin(), subset.end(), [&](int v) { return label[v - 1] == first; });
}

}  // namespace dcgrid
