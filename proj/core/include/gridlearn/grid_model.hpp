#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gridlearn/error.hpp"

namespace gridlearn {

enum class NodeRole { substation, load };
enum class LineStatus { operational, open };
enum class Weight { resistance, reactance };

/// Reference to a node of the forest. Loads and substations live in disjoint
/// index ranges: loads are 0..N-1, substations 0..K-1.
struct NodeRef {
    NodeRole role = NodeRole::load;
    int index = -1;

    static constexpr NodeRef load(int i) { return {NodeRole::load, i}; }
    static constexpr NodeRef substation(int k) { return {NodeRole::substation, k}; }

    constexpr bool is_substation() const { return role == NodeRole::substation; }
    constexpr bool is_load() const { return role == NodeRole::load; }

    /// Packs into one integer: loads map to themselves, substation k to -(k+1).
    constexpr std::int64_t key() const { return is_load() ? index : -(index + 1); }

    friend constexpr bool operator==(const NodeRef&, const NodeRef&) = default;
};

struct NodeSpec {
    std::int64_t id = 0;
    NodeRole role = NodeRole::load;
};

struct Line {
    std::int64_t a = 0;
    std::int64_t b = 0;
    double r = 0.0;
    double x = 0.0;
    LineStatus status = LineStatus::operational;
};

/// The full grid graph: operational lines plus open lines (tie switches).
struct Network {
    std::vector<NodeSpec> nodes;
    std::vector<Line> lines;
};

struct Impedance {
    double r = std::numeric_limits<double>::quiet_NaN();
    double x = std::numeric_limits<double>::quiet_NaN();

    double get(Weight w) const { return w == Weight::resistance ? r : x; }
    bool known() const { return r == r && x == x; }
};

/// Bidirectional map between external node ids and NodeRefs.
class NodeIndex {
public:
    NodeIndex() = default;
    explicit NodeIndex(std::span<const NodeSpec> nodes);

    int num_loads() const { return static_cast<int>(load_ids_.size()); }
    int num_substations() const { return static_cast<int>(substation_ids_.size()); }

    std::int64_t id_of(NodeRef ref) const;
    std::optional<NodeRef> find(std::int64_t id) const;
    NodeRef at(std::int64_t id) const;

    const std::vector<std::int64_t>& load_ids() const { return load_ids_; }
    const std::vector<std::int64_t>& substation_ids() const { return substation_ids_; }

private:
    std::vector<std::int64_t> load_ids_;
    std::vector<std::int64_t> substation_ids_;
    std::unordered_map<std::int64_t, NodeRef> by_id_;
};

/// Impedances of every line in the grid graph, keyed by unordered endpoint pair.
class LineCatalog {
public:
    LineCatalog() = default;
    LineCatalog(const Network& network, const NodeIndex& index);

    std::optional<Impedance> find(NodeRef a, NodeRef b) const;
    void insert(NodeRef a, NodeRef b, Impedance z);
    std::size_t size() const { return lines_.size(); }

private:
    struct PairHash {
        std::size_t operator()(const std::pair<std::int64_t, std::int64_t>& p) const noexcept {
            return std::hash<std::int64_t>{}(p.first * 1000003 + p.second);
        }
    };
    static std::pair<std::int64_t, std::int64_t> ordered(NodeRef a, NodeRef b);

    std::unordered_map<std::pair<std::int64_t, std::int64_t>, Impedance, PairHash> lines_;
};

/// Base-constrained spanning forest: K trees, one slack per tree, every load
/// node with exactly one parent. Immutable after construction.
///
/// Impedances may be unknown (NaN) for forests recovered by a learner when no
/// line catalog entry exists; anything that needs them checks `has_impedances`.
class RadialForest {
public:
    RadialForest() = default;

    /// Validates acyclicity and that every load reaches a substation.
    static RadialForest from_parents(NodeIndex index, std::vector<NodeRef> parents,
                                     std::vector<Impedance> impedances);

    int num_loads() const { return index_.num_loads(); }
    int num_substations() const { return index_.num_substations(); }
    const NodeIndex& index() const { return index_; }

    NodeRef parent(int a) const { return parent_.at(check(a)); }
    const Impedance& impedance(int a) const { return impedance_.at(check(a)); }
    double edge_weight(int a, Weight w) const { return impedance(a).get(w); }
    bool has_impedances() const;

    /// Substation index of the tree containing load `a`.
    int tree(int a) const { return tree_.at(check(a)); }
    /// Hop count from `a` to its slack (substation children have depth 1).
    int depth(int a) const { return depth_.at(check(a)); }

    std::span<const int> children(NodeRef node) const;
    /// Loads in an order where every parent precedes its children.
    std::span<const int> preorder() const { return preorder_; }

    /// True when c ∈ D_a (a counts as its own descendant).
    bool is_descendant(int c, int a) const;

    /// Sum of edge weights on the path from `a` to its slack.
    double path_sum(int a, Weight w) const;

    /// Deepest common load ancestor of a and b; nullopt when the paths only
    /// meet at a substation or the nodes live in different trees.
    std::optional<int> common_ancestor(int a, int b) const;

private:
    int check(int a) const;

    NodeIndex index_;
    std::vector<NodeRef> parent_;
    std::vector<Impedance> impedance_;
    std::vector<int> tree_;
    std::vector<int> depth_;
    std::vector<std::vector<int>> load_children_;
    std::vector<std::vector<int>> substation_children_;
    std::vector<int> preorder_;
    std::vector<int> enter_;
    std::vector<int> leave_;
    std::vector<double> path_r_;
    std::vector<double> path_x_;
};

/// Orients the operational lines of `network` toward their slacks.
/// Open lines are ignored here but still validated (endpoints, r, x > 0,
/// no parallel lines).
RadialForest build_forest(const Network& network);

/// Entry (a, b) of the inverse reduced weighted Laplacian: the weight of the
/// edges shared by the slack paths of a and b; 0 across trees.
double h_inverse_entry(const RadialForest& forest, Weight w, int a, int b);

/// H^{-1}(a, c) - H^{-1}(b, c) for b = parent(a): the weight of edge (a, b)
/// when c ∈ D_a, else 0.
double h_inverse_diff(const RadialForest& forest, Weight w, int a, NodeRef parent_b, int c);

/// D_a in preorder, starting with a.
std::vector<int> descendant_set(const RadialForest& forest, int a);

/// Applies H^{-1}_w to v in O(N) with one upward and one downward sweep.
Eigen::VectorXd path_apply(const RadialForest& forest, Weight w, const Eigen::VectorXd& v);

/// Reduced directed incidence matrix: row a is the edge (a, parent(a)).
Eigen::MatrixXd incidence_matrix(const RadialForest& forest);

/// Reduced Laplacian with edge weights 1/w (conductance-like), loads only.
Eigen::MatrixXd reduced_laplacian(const RadialForest& forest, Weight w);

/// Loads directly attached to each substation, indexed by substation.
std::vector<std::vector<int>> substation_children(const RadialForest& forest);

/// Undirected edges as sorted NodeRef key pairs; used for structural scoring.
std::vector<std::pair<std::int64_t, std::int64_t>> edge_keys(const RadialForest& forest);
std::pair<std::int64_t, std::int64_t> edge_key(NodeRef a, NodeRef b);

using EdgeKey = std::pair<std::int64_t, std::int64_t>;

/// Fraction of true edges absent from `estimate` (0 = exact recovery).
double structural_error(const RadialForest& truth, const RadialForest& estimate);
double structural_error(std::span<const EdgeKey> truth, std::span<const EdgeKey> estimate);

}  // namespace gridlearn
