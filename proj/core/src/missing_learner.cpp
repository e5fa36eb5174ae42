#include "gridlearn/missing_learner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gridlearn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Sums {
    double p = 0.0;
    double q = 0.0;
    double pq = 0.0;

    Sums& operator+=(const Sums& o) {
        p += o.p;
        q += o.q;
        pq += o.pq;
        return *this;
    }
};

class Placement {
public:
    Placement(const MomentSet& moments, std::span<const int> hidden, const InjectionModel& known,
              const LineCatalog& catalog, MatchTolerance tol)
        : moments_(moments), known_(known), catalog_(catalog), tol_(tol) {
        const int n = moments.num_loads();
        below_.resize(static_cast<std::size_t>(n));
        parked_.resize(static_cast<std::size_t>(n));
        parent_.resize(static_cast<std::size_t>(n));
        placed_.assign(static_cast<std::size_t>(n), 0);
        remaining_.assign(hidden.begin(), hidden.end());
        std::sort(remaining_.begin(), remaining_.end());
    }

    Sums own(int a) const { return {known_.var_p(a), known_.var_q(a), known_.cov_pq(a)}; }

    // Subtree of a as currently known: a itself plus everything placed or parked below.
    Sums subtree(int a) const {
        Sums s = own(a);
        s += below_[static_cast<std::size_t>(a)];
        return s;
    }

    std::optional<double> predict(int a, NodeRef b, const Sums& s) const {
        const auto z = catalog_.find(NodeRef::load(a), b);
        if (!z) return std::nullopt;
        return z->r * z->r * s.p + z->x * z->x * s.q + 2.0 * z->r * z->x * s.pq;
    }

    double relative(double lhs, double rhs) const {
        return std::abs(lhs - rhs) / std::max(std::abs(lhs), std::numeric_limits<double>::min());
    }

    bool has_line(int a, int b) const { return catalog_.find(NodeRef::load(a), NodeRef::load(b)).has_value(); }

    // Nodes parked under a, transitively.
    std::vector<int> parked_closure(int a) const {
        std::vector<int> out;
        std::vector<int> stack(parked_[static_cast<std::size_t>(a)].begin(), parked_[static_cast<std::size_t>(a)].end());
        while (!stack.empty()) {
            const int g = stack.back();
            stack.pop_back();
            out.push_back(g);
            for (int h : parked_[static_cast<std::size_t>(g)]) stack.push_back(h);
        }
        return out;
    }

    void attach(int child, NodeRef parent) {
        parent_[static_cast<std::size_t>(child)] = parent;
        placed_[static_cast<std::size_t>(child)] = 1;
        edges.push_back(edge_key(NodeRef::load(child), parent));
    }

    void add_below(NodeRef b, const Sums& s) {
        if (b.is_load()) below_[static_cast<std::size_t>(b.index)] += s;
    }

    // Tries to confirm a -> b. Returns true when a was placed or parked.
    // `may_park` is false for declared substation children.
    bool resolve(int a, NodeRef b, bool declared) {
        const double lhs = moments_.sqdiff(Channel::eps, a, b);
        const Sums base = subtree(a);
        MatchCheck check;
        check.node = a;
        check.parent = b;
        check.lhs = lhs;

        struct Hypothesis {
            int hidden = -1;
            double rhs = kNaN;
            double residual = kInf;
        };
        auto best_hidden = [&](bool intermediate, const std::vector<int>& closure, std::vector<Hypothesis>& all) {
            Hypothesis best;
            for (int d : remaining_) {
                if (!has_line(d, a)) continue;
                if (intermediate &&
                    !std::all_of(closure.begin(), closure.end(), [&](int g) { return has_line(g, d); })) {
                    continue;
                }
                Sums s = base;
                s += own(d);
                const auto rhs = predict(a, b, s);
                if (!rhs) continue;
                Hypothesis h{d, *rhs, relative(lhs, *rhs)};
                all.push_back(h);
                if (h.residual < best.residual) best = h;
            }
            return best;
        };
        auto rejected_min = [](const std::vector<Hypothesis>& all, const Hypothesis& accepted) {
            double m = kInf;
            for (const auto& h : all) {
                if (h.hidden != accepted.hidden || h.rhs != accepted.rhs) m = std::min(m, h.residual);
            }
            return m;
        };

        std::vector<Hypothesis> all;
        if (parked_[static_cast<std::size_t>(a)].empty()) {
            Hypothesis direct;
            if (const auto rhs = predict(a, b, base)) {
                direct = {-1, *rhs, relative(lhs, *rhs)};
                all.push_back(direct);
            }
            const Hypothesis leaf = best_hidden(false, {}, all);
            if (direct.hidden == -1 && direct.residual < kInf && residual_match(lhs, direct.rhs, std::abs(lhs), tol_)) {
                attach(a, b);
                add_below(b, base);
                check.kind = CheckKind::direct_edge;
                record(check, direct.rhs, direct.residual, rejected_min(all, direct));
                return true;
            }
            if (leaf.hidden >= 0 && residual_match(lhs, leaf.rhs, std::abs(lhs), tol_)) {
                attach(a, b);
                attach(leaf.hidden, NodeRef::load(a));
                place_hidden(leaf.hidden);
                Sums s = base;
                s += own(leaf.hidden);
                below_[static_cast<std::size_t>(a)] += own(leaf.hidden);
                add_below(b, s);
                check.kind = CheckKind::missing_leaf_child;
                check.hidden = leaf.hidden;
                record(check, leaf.rhs, leaf.residual, rejected_min(all, leaf));
                return true;
            }
            if (declared) {
                // The slack is given; accept the line even without a match.
                attach(a, b);
                check.kind = CheckKind::direct_edge;
                check.matched = false;
                record(check, direct.rhs, direct.residual, rejected_min(all, direct));
                return true;
            }
        } else {
            const auto closure = parked_closure(a);
            const Hypothesis mid = best_hidden(true, closure, all);
            if (mid.hidden >= 0 && residual_match(lhs, mid.rhs, std::abs(lhs), tol_)) {
                attach(a, b);
                attach(mid.hidden, NodeRef::load(a));
                for (int g : closure) attach(g, NodeRef::load(mid.hidden));
                place_hidden(mid.hidden);
                Sums s = base;
                s += own(mid.hidden);
                add_below(b, s);
                check.kind = CheckKind::missing_intermediate;
                check.hidden = mid.hidden;
                record(check, mid.rhs, mid.residual, rejected_min(all, mid));
                return true;
            }
            if (declared) return false;
        }
        // No hypothesis fits: a is a sibling or grandchild under a hidden node.
        parked_[static_cast<std::size_t>(b.index)].push_back(a);
        add_below(b, base);
        check.kind = CheckKind::parked;
        double m = kInf;
        for (const auto& h : all) m = std::min(m, h.residual);
        record(check, kNaN, kNaN, m);
        return true;
    }

    const std::vector<int>& remaining() const { return remaining_; }
    bool placed(int a) const { return placed_[static_cast<std::size_t>(a)] != 0; }
    NodeRef parent(int a) const { return parent_[static_cast<std::size_t>(a)]; }

    std::vector<EdgeKey> edges;
    std::vector<MatchCheck> checks;
    std::vector<int> placed_hidden;

private:
    void record(MatchCheck check, double rhs, double residual, double rejected) {
        check.rhs = rhs;
        check.residual = residual;
        check.best_rejected = rejected;
        checks.push_back(check);
    }

    void place_hidden(int d) {
        remaining_.erase(std::find(remaining_.begin(), remaining_.end(), d));
        placed_hidden.push_back(d);
    }

    const MomentSet& moments_;
    const InjectionModel& known_;
    const LineCatalog& catalog_;
    MatchTolerance tol_;
    std::vector<Sums> below_;
    std::vector<std::vector<int>> parked_;
    std::vector<NodeRef> parent_;
    std::vector<char> placed_;
    std::vector<int> remaining_;
};

}  // namespace

std::optional<int> hop_distance(const RadialForest& forest, int a, int b) {
    if (forest.tree(a) != forest.tree(b)) return std::nullopt;
    const auto lca = forest.common_ancestor(a, b);
    const int top = lca ? forest.depth(*lca) : 0;
    return forest.depth(a) + forest.depth(b) - 2 * top;
}

std::vector<MissingViolation> validate_missing_spec(const RadialForest& truth, std::span<const int> hidden) {
    std::vector<MissingViolation> out;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        const int a = hidden[i];
        if (truth.parent(a).is_substation()) out.push_back({ViolationKind::hidden_substation_child, a, -1});
        for (std::size_t j = i + 1; j < hidden.size(); ++j) {
            const auto d = hop_distance(truth, a, hidden[j]);
            if (d && *d <= 2) out.push_back({ViolationKind::hidden_too_close, a, hidden[j]});
        }
    }
    return out;
}

void apply_missing_spec(InjectionModel& model, const MissingSpec& spec) {
    if (!spec.has_stats()) return;
    const auto n = spec.hidden.size();
    if (spec.var_p.size() != n || spec.var_q.size() != n || spec.cov_pq.size() != n) {
        throw Error(ErrorCode::DimensionMismatch, "hidden covariance triples do not match the hidden list");
    }
    for (std::size_t i = 0; i < n; ++i) {
        const int d = spec.hidden[i];
        if (d < 0 || d >= model.size()) throw Error(ErrorCode::UnknownNode, "hidden load out of range");
        model.var_p(d) = spec.var_p[i];
        model.var_q(d) = spec.var_q[i];
        model.cov_pq(d) = spec.cov_pq[i];
    }
}

bool residual_match(double lhs, double rhs, double scale, const MatchTolerance& tol) {
    return std::abs(lhs - rhs) <= tol.rel * scale + tol.abs;
}

double default_match_tolerance(const MomentSet& moments, ToleranceRule rule, double coef) {
    const auto m = moments.sample_count();
    if (!m) return 1e-9;
    const double md = static_cast<double>(*m);
    if (rule == ToleranceRule::log_inverse_sqrt) return coef * std::sqrt(std::log(md) / md);
    return coef / std::sqrt(md);
}

MissingResult learn_with_missing(const MomentSet& moments, const NodeIndex& index, std::span<const int> hidden,
                                 const InjectionModel& known, const LineCatalog& catalog,
                                 const SubstationChildren& substation_children, const MissingOptions& options) {
    const int n = index.num_loads();
    if (moments.num_loads() != n || known.size() != n) {
        throw Error(ErrorCode::DimensionMismatch, "moment set, node index and injection model disagree on size");
    }
    std::vector<char> is_hidden(static_cast<std::size_t>(n), 0);
    for (int d : hidden) {
        if (d < 0 || d >= n) throw Error(ErrorCode::UnknownNode, "hidden load out of range");
        if (is_hidden[static_cast<std::size_t>(d)]) throw Error(ErrorCode::InvalidArgument, "hidden load listed twice");
        if (moments.is_observed(d)) {
            throw Error(ErrorCode::InvalidArgument, "load " + std::to_string(d) + " is both hidden and observed");
        }
        is_hidden[static_cast<std::size_t>(d)] = 1;
    }
    for (int a = 0; a < n; ++a) {
        if (!is_hidden[static_cast<std::size_t>(a)] && !moments.is_observed(a)) {
            throw Error(ErrorCode::IncompleteCover, "load " + std::to_string(a) + " is neither observed nor hidden");
        }
    }
    if (static_cast<int>(substation_children.size()) != index.num_substations()) {
        throw Error(ErrorCode::DimensionMismatch, "substation children list must have one entry per substation");
    }
    std::vector<int> slack(static_cast<std::size_t>(n), -1);
    for (int k = 0; k < index.num_substations(); ++k) {
        for (int a : substation_children[static_cast<std::size_t>(k)]) {
            if (a < 0 || a >= n) throw Error(ErrorCode::UnknownNode, "substation child out of range");
            if (is_hidden[static_cast<std::size_t>(a)]) {
                throw Error(ErrorCode::AssumptionViolated, "hidden load " + std::to_string(a) + " hangs off a substation");
            }
            slack[static_cast<std::size_t>(a)] = k;
        }
    }

    const MatchTolerance tol{options.tol_rel.value_or(default_match_tolerance(moments, options.rule, options.tol_coef)), options.tol_abs};
    Placement state(moments, hidden, known, catalog, tol);

    std::vector<int> order = moments.observed();
    std::vector<double> var(static_cast<std::size_t>(n), 0.0);
    for (int a : order) var[static_cast<std::size_t>(a)] = moments.variance(Channel::eps, a);
    std::sort(order.begin(), order.end());
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return var[static_cast<std::size_t>(a)] > var[static_cast<std::size_t>(b)];
    });
    std::vector<int> undiscovered = moments.observed();
    std::sort(undiscovered.begin(), undiscovered.end());

    MissingResult result;
    auto fail = [&](ErrorCode code, const std::string& msg) {
        if (!options.partial_on_failure) throw Error(code, msg);
        result.edges = state.edges;
        result.checks = state.checks;
        result.placed_hidden = state.placed_hidden;
        result.failure = code;
        result.failure_message = msg;
        return result;
    };

    std::vector<int> pending;
    for (int b : order) {
        std::vector<int> still;
        for (int a : pending) {
            if (slack[static_cast<std::size_t>(a)] >= 0) {
                still.push_back(a);
                continue;
            }
            int best = -1;
            double best_value = kInf;
            for (int u : undiscovered) {
                const double v = moments.sqdiff(Channel::eps, a, u);
                if (v < best_value) {
                    best_value = v;
                    best = u;
                }
            }
            if (best != b) {
                still.push_back(a);
                continue;
            }
            state.resolve(a, NodeRef::load(b), false);
        }
        pending = std::move(still);
        pending.push_back(b);
        undiscovered.erase(std::find(undiscovered.begin(), undiscovered.end(), b));
    }

    for (int a : pending) {
        const int k = slack[static_cast<std::size_t>(a)];
        if (k < 0) return fail(ErrorCode::IncompleteCover, "load " + std::to_string(a) + " found no parent");
        if (!state.resolve(a, NodeRef::substation(k), true)) {
            return fail(ErrorCode::NoConsistentPlacement,
                        "no hidden node explains the subtree below substation child " + std::to_string(a));
        }
    }
    for (int a = 0; a < n; ++a) {
        if (!is_hidden[static_cast<std::size_t>(a)] && !state.placed(a)) {
            return fail(ErrorCode::NoConsistentPlacement, "load " + std::to_string(a) + " was never placed");
        }
    }
    if (!state.remaining().empty()) {
        return fail(ErrorCode::NoConsistentPlacement,
                    std::to_string(state.remaining().size()) + " hidden load(s) left unplaced");
    }

    std::vector<NodeRef> parents(static_cast<std::size_t>(n));
    std::vector<Impedance> impedances(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) {
        parents[static_cast<std::size_t>(a)] = state.parent(a);
        if (auto z = catalog.find(NodeRef::load(a), state.parent(a))) impedances[static_cast<std::size_t>(a)] = *z;
    }
    result.forest = RadialForest::from_parents(index, std::move(parents), std::move(impedances));
    result.edges = state.edges;
    result.checks = state.checks;
    result.placed_hidden = state.placed_hidden;
    return result;
}

}  // namespace gridlearn
