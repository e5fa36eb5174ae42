#include "gridlearn/grid_model.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <string>

namespace gridlearn {

NodeIndex::NodeIndex(std::span<const NodeSpec> nodes) {
    for (const auto& n : nodes) {
        NodeRef ref = n.role == NodeRole::load ? NodeRef::load(static_cast<int>(load_ids_.size()))
                                               : NodeRef::substation(static_cast<int>(substation_ids_.size()));
        if (!by_id_.emplace(n.id, ref).second) {
            throw Error(ErrorCode::InvalidArgument, "duplicate node id " + std::to_string(n.id));
        }
        (n.role == NodeRole::load ? load_ids_ : substation_ids_).push_back(n.id);
    }
}

std::int64_t NodeIndex::id_of(NodeRef ref) const {
    const auto& ids = ref.is_load() ? load_ids_ : substation_ids_;
    if (ref.index < 0 || ref.index >= static_cast<int>(ids.size())) {
        throw Error(ErrorCode::UnknownNode, "node index " + std::to_string(ref.index) + " out of range");
    }
    return ids[static_cast<std::size_t>(ref.index)];
}

std::optional<NodeRef> NodeIndex::find(std::int64_t id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

NodeRef NodeIndex::at(std::int64_t id) const {
    auto ref = find(id);
    if (!ref) throw Error(ErrorCode::UnknownNode, "no node with id " + std::to_string(id));
    return *ref;
}

std::pair<std::int64_t, std::int64_t> LineCatalog::ordered(NodeRef a, NodeRef b) {
    return edge_key(a, b);
}

LineCatalog::LineCatalog(const Network& network, const NodeIndex& index) {
    for (const auto& line : network.lines) {
        insert(index.at(line.a), index.at(line.b), Impedance{line.r, line.x});
    }
}

std::optional<Impedance> LineCatalog::find(NodeRef a, NodeRef b) const {
    auto it = lines_.find(ordered(a, b));
    if (it == lines_.end()) return std::nullopt;
    return it->second;
}

void LineCatalog::insert(NodeRef a, NodeRef b, Impedance z) { lines_[ordered(a, b)] = z; }

int RadialForest::check(int a) const {
    if (a < 0 || a >= num_loads()) {
        throw Error(ErrorCode::UnknownNode, "load index " + std::to_string(a) + " out of range");
    }
    return a;
}

RadialForest RadialForest::from_parents(NodeIndex index, std::vector<NodeRef> parents,
                                        std::vector<Impedance> impedances) {
    const int n = index.num_loads();
    const int k = index.num_substations();
    if (static_cast<int>(parents.size()) != n || static_cast<int>(impedances.size()) != n) {
        throw Error(ErrorCode::DimensionMismatch, "parent/impedance vectors must cover every load");
    }
    RadialForest f;
    f.index_ = std::move(index);
    f.parent_ = std::move(parents);
    f.impedance_ = std::move(impedances);
    f.load_children_.assign(static_cast<std::size_t>(n), {});
    f.substation_children_.assign(static_cast<std::size_t>(k), {});

    for (int a = 0; a < n; ++a) {
        const NodeRef p = f.parent_[static_cast<std::size_t>(a)];
        if (p.is_load()) {
            if (p.index < 0 || p.index >= n) throw Error(ErrorCode::UnknownNode, "parent out of range");
            if (p.index == a) throw Error(ErrorCode::CycleDetected, "self loop at load " + std::to_string(a));
            f.load_children_[static_cast<std::size_t>(p.index)].push_back(a);
        } else {
            if (p.index < 0 || p.index >= k) throw Error(ErrorCode::UnknownNode, "substation out of range");
            f.substation_children_[static_cast<std::size_t>(p.index)].push_back(a);
        }
        const auto& z = f.impedance_[static_cast<std::size_t>(a)];
        if (z.known() && !(z.r > 0.0 && z.x > 0.0)) {
            throw Error(ErrorCode::InvalidLine, "line impedances must be positive");
        }
    }

    f.tree_.assign(static_cast<std::size_t>(n), -1);
    f.depth_.assign(static_cast<std::size_t>(n), 0);
    f.enter_.assign(static_cast<std::size_t>(n), 0);
    f.leave_.assign(static_cast<std::size_t>(n), 0);
    f.path_r_.assign(static_cast<std::size_t>(n), 0.0);
    f.path_x_.assign(static_cast<std::size_t>(n), 0.0);
    f.preorder_.reserve(static_cast<std::size_t>(n));

    // Iterative DFS from each substation; anything not reached sits on a cycle.
    std::vector<std::pair<int, std::size_t>> stack;
    for (int s = 0; s < k; ++s) {
        for (int root : f.substation_children_[static_cast<std::size_t>(s)]) {
            stack.emplace_back(root, 0);
            while (!stack.empty()) {
                auto& [node, next] = stack.back();
                const auto un = static_cast<std::size_t>(node);
                if (next == 0) {
                    const NodeRef p = f.parent_[un];
                    f.tree_[un] = s;
                    f.enter_[un] = static_cast<int>(f.preorder_.size());
                    f.preorder_.push_back(node);
                    const auto& z = f.impedance_[un];
                    if (p.is_load()) {
                        const auto up = static_cast<std::size_t>(p.index);
                        f.depth_[un] = f.depth_[up] + 1;
                        f.path_r_[un] = f.path_r_[up] + z.r;
                        f.path_x_[un] = f.path_x_[up] + z.x;
                    } else {
                        f.depth_[un] = 1;
                        f.path_r_[un] = z.r;
                        f.path_x_[un] = z.x;
                    }
                }
                const auto& kids = f.load_children_[un];
                if (next < kids.size()) {
                    int child = kids[next++];
                    stack.emplace_back(child, 0);
                } else {
                    f.leave_[un] = static_cast<int>(f.preorder_.size());
                    stack.pop_back();
                }
            }
        }
    }
    if (static_cast<int>(f.preorder_.size()) != n) {
        throw Error(ErrorCode::CycleDetected, "parent links contain a cycle");
    }
    return f;
}

bool RadialForest::has_impedances() const {
    return std::all_of(impedance_.begin(), impedance_.end(), [](const Impedance& z) { return z.known(); });
}

std::span<const int> RadialForest::children(NodeRef node) const {
    if (node.is_load()) return load_children_.at(static_cast<std::size_t>(check(node.index)));
    if (node.index < 0 || node.index >= num_substations()) {
        throw Error(ErrorCode::UnknownNode, "substation index out of range");
    }
    return substation_children_[static_cast<std::size_t>(node.index)];
}

bool RadialForest::is_descendant(int c, int a) const {
    check(c);
    check(a);
    const auto uc = static_cast<std::size_t>(c);
    const auto ua = static_cast<std::size_t>(a);
    return enter_[ua] <= enter_[uc] && enter_[uc] < leave_[ua];
}

double RadialForest::path_sum(int a, Weight w) const {
    check(a);
    return w == Weight::resistance ? path_r_[static_cast<std::size_t>(a)] : path_x_[static_cast<std::size_t>(a)];
}

std::optional<int> RadialForest::common_ancestor(int a, int b) const {
    check(a);
    check(b);
    if (tree_[static_cast<std::size_t>(a)] != tree_[static_cast<std::size_t>(b)]) return std::nullopt;
    auto up = [this](int v) -> std::optional<int> {
        const NodeRef p = parent_[static_cast<std::size_t>(v)];
        if (p.is_substation()) return std::nullopt;
        return p.index;
    };
    std::optional<int> u = a;
    std::optional<int> v = b;
    while (u && v && depth_[static_cast<std::size_t>(*u)] > depth_[static_cast<std::size_t>(*v)]) u = up(*u);
    while (u && v && depth_[static_cast<std::size_t>(*v)] > depth_[static_cast<std::size_t>(*u)]) v = up(*v);
    while (u && v && *u != *v) {
        u = up(*u);
        v = up(*v);
    }
    if (u && v) return u;
    return std::nullopt;
}

RadialForest build_forest(const Network& network) {
    NodeIndex index(network.nodes);
    const int n = index.num_loads();
    const int k = index.num_substations();
    auto slot = [n](NodeRef r) { return r.is_load() ? r.index : n + r.index; };

    std::set<EdgeKey> seen;
    struct Adj {
        int to;
        Impedance z;
    };
    std::vector<std::vector<Adj>> adj(static_cast<std::size_t>(n + k));
    std::vector<int> dsu(static_cast<std::size_t>(n + k));
    std::iota(dsu.begin(), dsu.end(), 0);
    auto find = [&dsu](int v) {
        while (dsu[static_cast<std::size_t>(v)] != v) {
            dsu[static_cast<std::size_t>(v)] = dsu[static_cast<std::size_t>(dsu[static_cast<std::size_t>(v)])];
            v = dsu[static_cast<std::size_t>(v)];
        }
        return v;
    };

    for (const auto& line : network.lines) {
        const NodeRef a = index.at(line.a);
        const NodeRef b = index.at(line.b);
        if (a == b) throw Error(ErrorCode::InvalidLine, "line endpoints must differ (node " + std::to_string(line.a) + ")");
        if (!(line.r > 0.0) || !(line.x > 0.0)) {
            throw Error(ErrorCode::InvalidLine,
                        "line " + std::to_string(line.a) + "-" + std::to_string(line.b) + " needs r > 0 and x > 0");
        }
        if (!seen.insert(edge_key(a, b)).second) {
            throw Error(ErrorCode::ParallelLines,
                        "more than one line between " + std::to_string(line.a) + " and " + std::to_string(line.b));
        }
        if (line.status != LineStatus::operational) continue;
        const int sa = slot(a);
        const int sb = slot(b);
        const int ra = find(sa);
        const int rb = find(sb);
        if (ra == rb) {
            throw Error(ErrorCode::CycleDetected, "operational lines close a loop at line " + std::to_string(line.a) +
                                                      "-" + std::to_string(line.b));
        }
        dsu[static_cast<std::size_t>(ra)] = rb;
        adj[static_cast<std::size_t>(sa)].push_back({sb, {line.r, line.x}});
        adj[static_cast<std::size_t>(sb)].push_back({sa, {line.r, line.x}});
    }

    std::vector<int> slack_of_component(static_cast<std::size_t>(n + k), -1);
    for (int s = 0; s < k; ++s) {
        const int root = find(n + s);
        auto& owner = slack_of_component[static_cast<std::size_t>(root)];
        if (owner >= 0) {
            throw Error(ErrorCode::MultipleSlacksInComponent,
                        "substations " + std::to_string(index.id_of(NodeRef::substation(owner))) + " and " +
                            std::to_string(index.id_of(NodeRef::substation(s))) + " share a component");
        }
        owner = s;
    }
    for (int a = 0; a < n; ++a) {
        if (slack_of_component[static_cast<std::size_t>(find(a))] < 0) {
            throw Error(ErrorCode::DisconnectedLoadNode,
                        "load " + std::to_string(index.id_of(NodeRef::load(a))) + " has no path to a substation");
        }
    }

    std::vector<NodeRef> parents(static_cast<std::size_t>(n));
    std::vector<Impedance> imps(static_cast<std::size_t>(n));
    std::vector<char> visited(static_cast<std::size_t>(n + k), 0);
    std::vector<int> queue;
    for (int s = 0; s < k; ++s) {
        queue.assign(1, n + s);
        visited[static_cast<std::size_t>(n + s)] = 1;
        for (std::size_t head = 0; head < queue.size(); ++head) {
            const int u = queue[head];
            for (const auto& e : adj[static_cast<std::size_t>(u)]) {
                if (visited[static_cast<std::size_t>(e.to)]) continue;
                visited[static_cast<std::size_t>(e.to)] = 1;
                parents[static_cast<std::size_t>(e.to)] = u < n ? NodeRef::load(u) : NodeRef::substation(u - n);
                imps[static_cast<std::size_t>(e.to)] = e.z;
                queue.push_back(e.to);
            }
        }
    }
    return RadialForest::from_parents(std::move(index), std::move(parents), std::move(imps));
}

double h_inverse_entry(const RadialForest& forest, Weight w, int a, int b) {
    auto lca = forest.common_ancestor(a, b);
    return lca ? forest.path_sum(*lca, w) : 0.0;
}

double h_inverse_diff(const RadialForest& forest, Weight w, int a, NodeRef parent_b, int c) {
    if (!(forest.parent(a) == parent_b)) {
        throw Error(ErrorCode::NotParent, "node is not the parent of load " + std::to_string(a));
    }
    return forest.is_descendant(c, a) ? forest.edge_weight(a, w) : 0.0;
}

std::vector<int> descendant_set(const RadialForest& forest, int a) {
    std::vector<int> out{a};
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (int c : forest.children(NodeRef::load(out[i]))) out.push_back(c);
    }
    return out;
}

Eigen::VectorXd path_apply(const RadialForest& forest, Weight w, const Eigen::VectorXd& v) {
    const int n = forest.num_loads();
    if (v.size() != n) throw Error(ErrorCode::DimensionMismatch, "vector length differs from load count");
    const auto order = forest.preorder();
    Eigen::VectorXd subtree = v;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const NodeRef p = forest.parent(*it);
        if (p.is_load()) subtree(p.index) += subtree(*it);
    }
    Eigen::VectorXd out(n);
    for (int a : order) {
        const NodeRef p = forest.parent(a);
        const double base = p.is_load() ? out(p.index) : 0.0;
        out(a) = base + forest.edge_weight(a, w) * subtree(a);
    }
    return out;
}

Eigen::MatrixXd incidence_matrix(const RadialForest& forest) {
    const int n = forest.num_loads();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (int a = 0; a < n; ++a) {
        m(a, a) = 1.0;
        const NodeRef p = forest.parent(a);
        if (p.is_load()) m(a, p.index) = -1.0;
    }
    return m;
}

Eigen::MatrixXd reduced_laplacian(const RadialForest& forest, Weight w) {
    const Eigen::MatrixXd m = incidence_matrix(forest);
    Eigen::VectorXd g(forest.num_loads());
    for (int a = 0; a < forest.num_loads(); ++a) g(a) = 1.0 / forest.edge_weight(a, w);
    return m.transpose() * g.asDiagonal() * m;
}

std::vector<std::vector<int>> substation_children(const RadialForest& forest) {
    std::vector<std::vector<int>> out(static_cast<std::size_t>(forest.num_substations()));
    for (int s = 0; s < forest.num_substations(); ++s) {
        auto kids = forest.children(NodeRef::substation(s));
        out[static_cast<std::size_t>(s)].assign(kids.begin(), kids.end());
    }
    return out;
}

EdgeKey edge_key(NodeRef a, NodeRef b) {
    const std::int64_t ka = a.key();
    const std::int64_t kb = b.key();
    return ka < kb ? EdgeKey{ka, kb} : EdgeKey{kb, ka};
}

std::vector<EdgeKey> edge_keys(const RadialForest& forest) {
    std::vector<EdgeKey> out;
    out.reserve(static_cast<std::size_t>(forest.num_loads()));
    for (int a = 0; a < forest.num_loads(); ++a) out.push_back(edge_key(NodeRef::load(a), forest.parent(a)));
    std::sort(out.begin(), out.end());
    return out;
}

double structural_error(std::span<const EdgeKey> truth, std::span<const EdgeKey> estimate) {
    if (truth.empty()) return 0.0;
    std::set<EdgeKey> est(estimate.begin(), estimate.end());
    std::size_t missed = 0;
    for (const auto& e : truth) missed += est.count(e) == 0 ? 1 : 0;
    return static_cast<double>(missed) / static_cast<double>(truth.size());
}

double structural_error(const RadialForest& truth, const RadialForest& estimate) {
    const auto t = edge_keys(truth);
    const auto e = edge_keys(estimate);
    return structural_error(t, e);
}

}  // namespace gridlearn
