#include "gridlearn/line_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gridlearn {

namespace {

struct Root {
    double d = 0.0;  // r^2 - x^2
    RootChoice label = RootChoice::plus;
    bool feasible = false;
    bool positive_cov = false;
    EdgeCandidate candidate;
};

Root evaluate_root(double d, RootChoice label, double total, double a_stat, double c_stat, double p, double q,
                   double scale) {
    Root root;
    root.d = d;
    root.label = label;
    const double u = 0.5 * (total + d);
    const double v = 0.5 * (total - d);
    if (!(u > 0.0) || !(v > 0.0)) return root;
    root.feasible = true;
    const double w = std::sqrt(u * v);
    const double s = (a_stat - u * p - v * q) / (2.0 * w);
    root.positive_cov = s > 0.0;
    root.candidate.r = std::sqrt(u);
    root.candidate.x = std::sqrt(v);
    root.candidate.cov_pq_subtree = s;
    root.candidate.residual = std::abs(c_stat - (w * (p - q) - d * s)) / scale;
    return root;
}

}  // namespace

EdgeEstimate estimate_edge(double a_stat, double b_stat, double c_stat, double sum_var_p, double sum_var_q,
                           double descendant_cov_pq, const EdgeOptions& options) {
    const double p = sum_var_p;
    const double q = sum_var_q;
    const double scale = a_stat + b_stat;
    if (!(p + q > 0.0) || !(scale > 0.0)) {
        throw Error(ErrorCode::SingularSystem, "edge statistics or subtree variances are not positive");
    }
    const double total = scale / (p + q);  // r^2 + x^2
    const double e = p - q;
    const double amb = a_stat - b_stat;

    // Quadratic in d = r^2 - x^2:  alpha d^2 - 2 beta d + gamma = 0.
    const double alpha = amb * amb + 4.0 * c_stat * c_stat;
    if (!(alpha > 0.0)) throw Error(ErrorCode::SingularSystem, "statistics do not separate r from x");
    const double t2 = total * total;
    const double beta = t2 * e * amb;
    const double gamma = t2 * (e * e * t2 - 4.0 * c_stat * c_stat);
    // beta^2 - alpha gamma = 4 C^2 T^2 (alpha - e^2 T^2), which avoids one cancellation.
    const double inner = alpha - e * e * t2;
    if (inner < -options.discriminant_tol * alpha) {
        throw Error(ErrorCode::NoRealRoot, "negative discriminant");
    }
    const double sq = 2.0 * std::abs(c_stat) * total * std::sqrt(std::max(inner, 0.0));

    double d_plus = 0.0;
    double d_minus = 0.0;
    if (beta >= 0.0) {
        const double k = beta + sq;
        d_plus = k / alpha;
        d_minus = k != 0.0 ? gamma / k : 0.0;
    } else {
        const double k = beta - sq;
        d_minus = k / alpha;
        d_plus = gamma / k;
    }

    EdgeEstimate out;
    auto finish = [&](const Root& chosen) {
        out.r_hat = chosen.candidate.r;
        out.x_hat = chosen.candidate.x;
        out.cov_pq_subtree = chosen.candidate.cov_pq_subtree;
        out.cov_pq_hat = chosen.candidate.cov_pq_subtree - descendant_cov_pq;
        out.residual = chosen.candidate.residual;
        out.root = chosen.label;
        out.near_symmetric = std::abs(chosen.d) <= options.symmetric_tol * total;
        return out;
    };

    if (std::abs(d_plus - d_minus) <= options.coincident_tol * total) {
        const Root r = evaluate_root(0.5 * (d_plus + d_minus), RootChoice::coincident, total, a_stat, c_stat, p, q,
                                     scale);
        if (!r.feasible) throw Error(ErrorCode::NoRealRoot, "coincident root gives non-positive r or x");
        return finish(r);
    }

    const Root rp = evaluate_root(d_plus, RootChoice::plus, total, a_stat, c_stat, p, q, scale);
    const Root rm = evaluate_root(d_minus, RootChoice::minus, total, a_stat, c_stat, p, q, scale);
    if (!rp.feasible && !rm.feasible) throw Error(ErrorCode::NoRealRoot, "no root gives positive r and x");
    if (rp.feasible != rm.feasible) return finish(rp.feasible ? rp : rm);

    // Both feasible: a positive subtree cov_pq first, then the cross residual.
    const Root* best = &rp;
    const Root* other = &rm;
    if (rp.positive_cov != rm.positive_cov) {
        if (!rp.positive_cov) std::swap(best, other);
    } else {
        if (rm.candidate.residual < rp.candidate.residual) std::swap(best, other);
        if (best->positive_cov &&
            other->candidate.residual - best->candidate.residual <= options.tie_tol) {
            throw Error(ErrorCode::BothRootsFeasible, "both roots fit the edge statistics equally well");
        }
    }
    out.alternate = other->candidate;
    return finish(*best);
}

EdgeCandidate estimate_edge_known_cov(double a_stat, double b_stat, double c_stat, double sum_var_p,
                                      double sum_var_q, double sum_cov_pq) {
    const double p = sum_var_p;
    const double q = sum_var_q;
    const double s = sum_cov_pq;
    Eigen::Matrix3d m;
    m << p, q, 2.0 * s,  //
        q, p, -2.0 * s,  //
        -s, s, p - q;
    Eigen::FullPivLU<Eigen::Matrix3d> lu(m);
    if (!lu.isInvertible()) throw Error(ErrorCode::SingularSystem, "known-covariance edge system is singular");
    const Eigen::Vector3d sol = lu.solve(Eigen::Vector3d(a_stat, b_stat, c_stat));
    if (!(sol(0) > 0.0) || !(sol(1) > 0.0)) throw Error(ErrorCode::NoRealRoot, "solved r^2 or x^2 not positive");
    EdgeCandidate c;
    c.r = std::sqrt(sol(0));
    c.x = std::sqrt(sol(1));
    c.cov_pq_subtree = s;
    c.residual = std::abs(sol(2) - c.r * c.x) / (c.r * c.x);
    return c;
}

ParamResult learn_structure_and_params(const MomentSet& moments, const NodeIndex& index,
                                       const Eigen::VectorXd& var_p, const Eigen::VectorXd& var_q,
                                       const SubstationChildren& substation_children, const ParamOptions& options) {
    const int n = index.num_loads();
    if (var_p.size() != n || var_q.size() != n) {
        throw Error(ErrorCode::DimensionMismatch, "known variances need one entry per load");
    }
    if (options.known_cov_pq && options.known_cov_pq->size() != n) {
        throw Error(ErrorCode::DimensionMismatch, "known cov_pq needs one entry per load");
    }
    if (!moments.has_phase()) throw Error(ErrorCode::MissingPhaseData, "line estimation needs phase data");

    ParamResult out;
    out.structure = learn_structure(moments, index, substation_children, nullptr, options.structure);
    const RadialForest& shape = out.structure.forest;
    out.edges.resize(static_cast<std::size_t>(n));
    out.cov_pq_hat = Eigen::VectorXd::Zero(n);

    // Subtree sums, filled bottom-up.
    std::vector<double> sub_p(static_cast<std::size_t>(n)), sub_q(static_cast<std::size_t>(n)),
        sub_pq(static_cast<std::size_t>(n));
    std::vector<Impedance> impedances(static_cast<std::size_t>(n));
    const auto pre = shape.preorder();
    for (auto it = pre.rbegin(); it != pre.rend(); ++it) {
        const int a = *it;
        double dp = 0.0, dq = 0.0, dpq = 0.0;
        for (int c : shape.children(NodeRef::load(a))) {
            dp += sub_p[static_cast<std::size_t>(c)];
            dq += sub_q[static_cast<std::size_t>(c)];
            dpq += sub_pq[static_cast<std::size_t>(c)];
        }
        const NodeRef b = shape.parent(a);
        const double sa = moments.sqdiff(Channel::eps, a, b);
        const double sb = moments.sqdiff(Channel::theta, a, b);
        const double sc = moments.sqdiff(Channel::cross, a, b);
        const double tp = var_p(a) + dp;
        const double tq = var_q(a) + dq;

        EdgeEstimate est;
        if (options.known_cov_pq) {
            const double own = (*options.known_cov_pq)(a);
            const auto c = estimate_edge_known_cov(sa, sb, sc, tp, tq, own + dpq);
            est.r_hat = c.r;
            est.x_hat = c.x;
            est.cov_pq_hat = own;
            est.cov_pq_subtree = own + dpq;
            est.residual = c.residual;
        } else {
            est = estimate_edge(sa, sb, sc, tp, tq, dpq, options.edge);
        }
        out.edges[static_cast<std::size_t>(a)] = est;
        out.cov_pq_hat(a) = est.cov_pq_hat;
        sub_p[static_cast<std::size_t>(a)] = tp;
        sub_q[static_cast<std::size_t>(a)] = tq;
        sub_pq[static_cast<std::size_t>(a)] = est.cov_pq_subtree;
        impedances[static_cast<std::size_t>(a)] = {est.r_hat, est.x_hat};
    }

    std::vector<NodeRef> parents(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) parents[static_cast<std::size_t>(a)] = shape.parent(a);
    out.forest = RadialForest::from_parents(index, std::move(parents), std::move(impedances));
    return out;
}

}  // namespace gridlearn
