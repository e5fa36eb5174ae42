#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "gridlearn/grid_model.hpp"
#include "gridlearn/lcpf.hpp"
#include "gridlearn/moments.hpp"
#include "gridlearn/topology_learner.hpp"

namespace gridlearn {

enum class RootChoice { plus, minus, coincident };

struct EdgeCandidate {
    double r = 0.0;
    double x = 0.0;
    double cov_pq_subtree = 0.0;  // S over D_a implied by this root
    double residual = 0.0;        // relative mismatch of the cross statistic
};

struct EdgeEstimate {
    double r_hat = 0.0;
    double x_hat = 0.0;
    /// cov_pq of the child node itself: subtree value minus descendants.
    double cov_pq_hat = 0.0;
    double cov_pq_subtree = 0.0;
    double residual = 0.0;
    RootChoice root = RootChoice::plus;
    /// |r - x| is within `symmetric_tol` of r + x; the estimate is still the
    /// selected root but callers should treat it with suspicion.
    bool near_symmetric = false;
    /// The rejected root when it was feasible.
    std::optional<EdgeCandidate> alternate;
};

struct EdgeOptions {
    /// Negative discriminants down to -tol * scale are treated as zero.
    double discriminant_tol = 1e-9;
    /// Roots closer than this (relative to r^2 + x^2) count as coincident.
    double coincident_tol = 1e-12;
    /// Residual gap below which two admissible roots are indistinguishable.
    double tie_tol = 1e-12;
    double symmetric_tol = 1e-6;
};

/// Recovers (r, x) of the line above a node from its three centered
/// squared-difference statistics A (eps), B (theta), C (cross), given the
/// subtree sums of var_p and var_q over D_a. The subtree cov_pq is a third
/// unknown; it comes out of the quadratic.
///
/// Throws SingularSystem when the statistics carry no information about the
/// r/x split, NoRealRoot when no root gives positive r and x,
/// BothRootsFeasible when two roots are equally consistent.
EdgeEstimate estimate_edge(double a_stat, double b_stat, double c_stat, double sum_var_p, double sum_var_q,
                           double descendant_cov_pq = 0.0, const EdgeOptions& options = {});

/// Same edge with the subtree cov_pq also known: the system becomes linear in
/// (r^2, x^2, rx). `residual` reports how far rx is from sqrt(r^2 x^2).
EdgeCandidate estimate_edge_known_cov(double a_stat, double b_stat, double c_stat, double sum_var_p,
                                      double sum_var_q, double sum_cov_pq);

struct ParamOptions {
    StructureOptions structure;
    EdgeOptions edge;
    /// When set, per-node cov_pq is treated as known and the linear solver is
    /// used instead of the quadratic one.
    std::optional<Eigen::VectorXd> known_cov_pq;
};

struct ParamResult {
    StructureResult structure;
    /// Recovered forest with estimated impedances.
    RadialForest forest;
    /// Indexed by child load.
    std::vector<EdgeEstimate> edges;
    Eigen::VectorXd cov_pq_hat;
};

/// Structure from eps statistics, then per-line impedances and per-node
/// cov_pq leaf-upward from known var_p and var_q.
ParamResult learn_structure_and_params(const MomentSet& moments, const NodeIndex& index,
                                       const Eigen::VectorXd& var_p, const Eigen::VectorXd& var_q,
                                       const SubstationChildren& substation_children,
                                       const ParamOptions& options = {});

}  // namespace gridlearn
