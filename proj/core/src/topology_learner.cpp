#include "gridlearn/topology_learner.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>

namespace gridlearn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Candidate {
    int best = -1;
    double best_value = kInf;
    double runner_up = kInf;
};

Candidate argmin_over(const MomentSet& moments, int a, const std::vector<int>& pool) {
    Candidate c;
    for (int u : pool) {
        const double v = moments.sqdiff(Channel::eps, a, u);
        if (v < c.best_value) {
            c.runner_up = c.best_value;
            c.best_value = v;
            c.best = u;
        } else if (v < c.runner_up) {
            c.runner_up = v;
        }
    }
    return c;
}

double relative_margin(double best, double runner_up) {
    if (runner_up == kInf) return kInf;
    const double scale = std::max(std::abs(best), std::numeric_limits<double>::min());
    return (runner_up - best) / scale;
}

std::vector<int> declared_slack(const SubstationChildren& children, int n_loads, int n_subs) {
    if (static_cast<int>(children.size()) != n_subs) {
        throw Error(ErrorCode::DimensionMismatch, "substation children list must have one entry per substation");
    }
    std::vector<int> slack(static_cast<std::size_t>(n_loads), -1);
    for (int k = 0; k < n_subs; ++k) {
        for (int a : children[static_cast<std::size_t>(k)]) {
            if (a < 0 || a >= n_loads) throw Error(ErrorCode::UnknownNode, "substation child out of range");
            if (slack[static_cast<std::size_t>(a)] >= 0) {
                throw Error(ErrorCode::InvalidArgument,
                            "load " + std::to_string(a) + " declared under two substations");
            }
            slack[static_cast<std::size_t>(a)] = k;
        }
    }
    return slack;
}

// Complex conductance 1/(r + ix) of the line above `a`.
std::complex<double> admittance(const RadialForest& forest, int a) {
    const auto& z = forest.impedance(a);
    return 1.0 / std::complex<double>(z.r, z.x);
}

void require_impedances(const RadialForest& forest) {
    if (!forest.has_impedances()) {
        throw Error(ErrorCode::MissingImpedance, "forest has lines with unknown impedance");
    }
}

// Row a of the complex reduced Laplacian as (column, coefficient) pairs.
std::vector<std::pair<int, std::complex<double>>> laplacian_row(const RadialForest& forest, int a) {
    std::vector<std::pair<int, std::complex<double>>> row;
    const std::complex<double> ya = admittance(forest, a);
    std::complex<double> diag = ya;
    const NodeRef p = forest.parent(a);
    if (p.is_load()) row.emplace_back(p.index, -ya);
    for (int c : forest.children(NodeRef::load(a))) {
        const auto yc = admittance(forest, c);
        diag += yc;
        row.emplace_back(c, -yc);
    }
    row.emplace_back(a, diag);
    return row;
}

InjectionModel recover_means(const MomentSet& moments, const RadialForest& forest) {
    const int n = forest.num_loads();
    Eigen::VectorXd mu_eps(n), mu_theta(n);
    for (int a = 0; a < n; ++a) {
        mu_eps(a) = moments.mean(Channel::eps, a);
        mu_theta(a) = moments.mean(Channel::theta, a);
    }
    const auto inj = invert_lcpf(forest, mu_theta, mu_eps);
    InjectionModel model = InjectionModel::zeros(n);
    model.mu_p = inj.p;
    model.mu_q = inj.q;
    return model;
}

void check_inputs(const MomentSet& moments, const RadialForest& forest) {
    if (moments.num_loads() != forest.num_loads()) {
        throw Error(ErrorCode::DimensionMismatch, "moment set and forest disagree on load count");
    }
    if (!moments.has_phase()) throw Error(ErrorCode::MissingPhaseData, "injection statistics need phase data");
    require_impedances(forest);
}

}  // namespace

bool StructureResult::ambiguous() const {
    return std::any_of(edges.begin(), edges.end(), [](const EdgeSelection& e) { return e.ambiguous; });
}

bool InjectionEstimate::any_clamped() const {
    return std::any_of(nodes.begin(), nodes.end(), [](const NodeInjectionDiagnostics& d) { return d.clamped; });
}

StructureResult learn_structure(const MomentSet& moments, const NodeIndex& index,
                                const SubstationChildren& substation_children, const LineCatalog* catalog,
                                const StructureOptions& options) {
    const int n = index.num_loads();
    if (moments.num_loads() != n) {
        throw Error(ErrorCode::DimensionMismatch, "moment set and node index disagree on load count");
    }
    if (static_cast<int>(moments.observed().size()) != n) {
        throw Error(ErrorCode::IncompleteCover, "structure learning needs every load observed");
    }
    const auto slack = declared_slack(substation_children, n, index.num_substations());

    StructureResult result;
    auto& order = result.selection_order;
    order.resize(static_cast<std::size_t>(n));
    std::vector<double> var(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) {
        order[static_cast<std::size_t>(a)] = a;
        var[static_cast<std::size_t>(a)] = moments.variance(Channel::eps, a);
    }
    // U only ever loses its maximum, so the selection sequence is a sort.
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return var[static_cast<std::size_t>(a)] > var[static_cast<std::size_t>(b)];
    });
    for (std::size_t i = 1; i < order.size(); ++i) {
        const double hi = var[static_cast<std::size_t>(order[i - 1])];
        const double lo = var[static_cast<std::size_t>(order[i])];
        if (hi - lo <= options.tie_rel_tol * std::abs(hi)) ++result.variance_ties;
    }

    std::vector<int> undiscovered(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) undiscovered[static_cast<std::size_t>(a)] = a;
    std::vector<int> pending;
    std::vector<NodeRef> parents(static_cast<std::size_t>(n));
    std::vector<char> attached(static_cast<std::size_t>(n), 0);

    for (int b : order) {
        std::vector<int> still_pending;
        for (int a : pending) {
            if (slack[static_cast<std::size_t>(a)] >= 0) {
                still_pending.push_back(a);
                continue;
            }
            const auto c = argmin_over(moments, a, undiscovered);
            if (c.best != b) {
                still_pending.push_back(a);
                continue;
            }
            EdgeSelection e;
            e.child = a;
            e.parent = NodeRef::load(b);
            e.sqdiff = c.best_value;
            e.runner_up = c.runner_up;
            e.margin = relative_margin(c.best_value, c.runner_up);
            e.ambiguous = e.margin <= options.tie_rel_tol;
            result.edges.push_back(e);
            parents[static_cast<std::size_t>(a)] = e.parent;
            attached[static_cast<std::size_t>(a)] = 1;
        }
        pending = std::move(still_pending);
        pending.push_back(b);
        undiscovered.erase(std::find(undiscovered.begin(), undiscovered.end(), b));
    }

    for (int a : pending) {
        const int k = slack[static_cast<std::size_t>(a)];
        if (k < 0) throw Error(ErrorCode::IncompleteCover, "load " + std::to_string(a) + " found no parent");
        EdgeSelection e;
        e.child = a;
        e.parent = NodeRef::substation(k);
        e.declared = true;
        e.sqdiff = var[static_cast<std::size_t>(a)];
        e.runner_up = kInf;
        e.margin = kInf;
        result.edges.push_back(e);
        parents[static_cast<std::size_t>(a)] = e.parent;
        attached[static_cast<std::size_t>(a)] = 1;
    }

    std::vector<Impedance> impedances(static_cast<std::size_t>(n));
    if (catalog) {
        for (int a = 0; a < n; ++a) {
            if (auto z = catalog->find(NodeRef::load(a), parents[static_cast<std::size_t>(a)])) {
                impedances[static_cast<std::size_t>(a)] = *z;
            }
        }
    }
    result.forest = RadialForest::from_parents(index, std::move(parents), std::move(impedances));
    return result;
}

SubtreeSums solve_edge_system(double r, double x, const EdgeStatistics& observed) {
    if (!(r > 0.0) || !(x > 0.0) || !std::isfinite(r) || !std::isfinite(x)) {
        throw Error(ErrorCode::SingularSystem, "edge system needs finite r, x > 0");
    }
    Eigen::Matrix3d m;
    m << r * r, x * x, 2.0 * r * x,  //
        x * x, r * r, -2.0 * r * x,  //
        r * x, -r * x, x * x - r * r;
    // det = -(r^2 + x^2)^3, so only underflow can make this singular.
    const double det = m.determinant();
    if (!(std::abs(det) > 0.0) || !std::isfinite(det)) {
        throw Error(ErrorCode::SingularSystem, "edge system determinant vanished");
    }
    const Eigen::Vector3d rhs(observed.eps, observed.theta, observed.cross);
    const Eigen::Vector3d s = m.partialPivLu().solve(rhs);
    return {s(0), s(1), s(2)};
}

Injections invert_lcpf(const RadialForest& forest, const Eigen::VectorXd& theta, const Eigen::VectorXd& eps) {
    const int n = forest.num_loads();
    if (theta.size() != n || eps.size() != n) {
        throw Error(ErrorCode::DimensionMismatch, "voltage vectors must have one entry per load");
    }
    require_impedances(forest);
    // p - iq = Z^{-1} (eps + i theta), Z^{-1} the Laplacian with weights 1/(r + ix).
    Injections out{Eigen::VectorXd(n), Eigen::VectorXd(n)};
    for (int a = 0; a < n; ++a) {
        std::complex<double> s = 0.0;
        for (const auto& [b, coef] : laplacian_row(forest, a)) s += coef * std::complex<double>(eps(b), theta(b));
        out.p(a) = s.real();
        out.q(a) = -s.imag();
    }
    return out;
}

InjectionEstimate estimate_injection_stats(const MomentSet& moments, const RadialForest& forest,
                                           const InjectionOptions& options) {
    check_inputs(moments, forest);
    const int n = forest.num_loads();
    InjectionEstimate est;
    est.model = recover_means(moments, forest);
    est.nodes.resize(static_cast<std::size_t>(n));

    std::vector<SubtreeSums> totals(static_cast<std::size_t>(n));
    const auto pre = forest.preorder();
    for (auto it = pre.rbegin(); it != pre.rend(); ++it) {
        const int a = *it;
        const NodeRef b = forest.parent(a);
        const EdgeStatistics obs{moments.sqdiff(Channel::eps, a, b), moments.sqdiff(Channel::theta, a, b),
                                 moments.sqdiff(Channel::cross, a, b)};
        const auto& z = forest.impedance(a);
        const SubtreeSums t = solve_edge_system(z.r, z.x, obs);
        totals[static_cast<std::size_t>(a)] = t;

        SubtreeSums below;
        for (int c : forest.children(NodeRef::load(a))) {
            const auto& tc = totals[static_cast<std::size_t>(c)];
            below.p += tc.p;
            below.q += tc.q;
            below.pq += tc.pq;
        }
        auto& d = est.nodes[static_cast<std::size_t>(a)];
        d.raw_var_p = t.p - below.p;
        d.raw_var_q = t.q - below.q;
        d.raw_cov_pq = t.pq - below.pq;
        d.clamped = d.raw_var_p < options.variance_floor || d.raw_var_q < options.variance_floor;
        d.nonpositive_cov = !(d.raw_cov_pq > 0.0);
        est.model.var_p(a) = std::max(d.raw_var_p, options.variance_floor);
        est.model.var_q(a) = std::max(d.raw_var_q, options.variance_floor);
        est.model.cov_pq(a) = d.raw_cov_pq;
    }
    return est;
}

InjectionEstimate estimate_injection_stats_direct(const MomentSet& moments, const RadialForest& forest) {
    check_inputs(moments, forest);
    const int n = forest.num_loads();
    InjectionEstimate est;
    est.model = recover_means(moments, forest);
    est.nodes.resize(static_cast<std::size_t>(n));

    for (int a = 0; a < n; ++a) {
        const auto row = laplacian_row(forest, a);
        // p = Lr eps - Li theta,  -q = Li eps + Lr theta.
        double vp = 0.0, vq = 0.0, cpq = 0.0;
        for (const auto& [b, lb] : row) {
            for (const auto& [c, lc] : row) {
                const double ee = moments.covariance(Channel::eps, b, c);
                const double tt = moments.covariance(Channel::theta, b, c);
                const double et = moments.covariance(Channel::cross, b, c);  // Cov(eps_b, theta_c)
                const double te = moments.covariance(Channel::cross, c, b);  // Cov(theta_b, eps_c)
                const double rb = lb.real(), ib = lb.imag(), rc = lc.real(), ic = lc.imag();
                vp += rb * rc * ee - rb * ic * et - ib * rc * te + ib * ic * tt;
                vq += ib * ic * ee + ib * rc * et + rb * ic * te + rb * rc * tt;
                cpq -= rb * ic * ee + rb * rc * et - ib * ic * te - ib * rc * tt;
            }
        }
        auto& d = est.nodes[static_cast<std::size_t>(a)];
        d.raw_var_p = vp;
        d.raw_var_q = vq;
        d.raw_cov_pq = cpq;
        d.nonpositive_cov = !(cpq > 0.0);
        est.model.var_p(a) = vp;
        est.model.var_q(a) = vq;
        est.model.cov_pq(a) = cpq;
    }
    return est;
}

LearnResult learn_structure_and_statistics(const MomentSet& moments, const NodeIndex& index,
                                           const SubstationChildren& substation_children, const LineCatalog& catalog,
                                           const StructureOptions& structure_options,
                                           const InjectionOptions& injection_options) {
    LearnResult out;
    out.structure = learn_structure(moments, index, substation_children, &catalog, structure_options);
    out.injections = estimate_injection_stats(moments, out.structure.forest, injection_options);
    return out;
}

}  // namespace gridlearn
