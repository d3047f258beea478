#pragma once

#include <Eigen/Dense>
#include <vector>

namespace dcgrid {

// Vertex ids are 1-based. Each edge is oriented from the lower id (source)
// to the higher id (sink).
struct Edge {
    int k = 0;
    int l = 0;
    double weight = 1.0;
};

class Topology {
public:
    Topology() = default;
    explicit Topology(int vertex_count);
    Topology(int vertex_count, const std::vector<Edge>& edges);

    void add_edge(int k, int l, double weight = 1.0);

    int vertex_count() const { return n_; }
    int edge_count() const { return static_cast<int>(edges_.size()); }
    const std::vector<Edge>& edges() const { return edges_; }

    int source(int e) const { return edges_[e].k; }
    int sink(int e) const { return edges_[e].l; }
    bool has_edge(int k, int l) const;

    // Copy with every edge touching a vertex outside `keep` removed.
    // Vertex count is unchanged.
    Topology restricted(const std::vector<bool>& keep) const;

private:
    int n_ = 0;
    std::vector<Edge> edges_;
};

Eigen::MatrixXd incidence_matrix(const Topology& t);
Eigen::MatrixXd laplacian(const Topology& t);

// Connectivity of the subgraph induced on `subset` (1-based ids).
bool is_connected(const Topology& t, const std::vector<int>& subset);

// Component label per vertex (0-based index), restricted to active vertices;
// inactive vertices get -1.
std::vector<int> components(const Topology& t, const std::vector<bool>& active);

}  // namespace dcgrid
