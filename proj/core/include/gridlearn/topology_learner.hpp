#pragma once

#include <vector>

#include <Eigen/Dense>

#include "gridlearn/grid_model.hpp"
#include "gridlearn/lcpf.hpp"
#include "gridlearn/moments.hpp"

namespace gridlearn {

/// Loads known to hang directly off each substation, indexed by substation.
using SubstationChildren = std::vector<std::vector<int>>;

struct StructureOptions {
    /// Relative gap below which the best and runner-up candidates count as tied.
    /// Ties resolve to the lowest index and are flagged, never rejected.
    double tie_rel_tol = 1e-9;
};

/// How one parent was chosen.
struct EdgeSelection {
    int child = -1;
    NodeRef parent;
    bool declared = false;  // substation child given as input
    double sqdiff = 0.0;    // statistic against the chosen parent
    double runner_up = 0.0; // next best candidate in the undiscovered set (inf if none)
    double margin = 0.0;    // (runner_up - sqdiff) / |sqdiff|
    bool ambiguous = false;
};

struct StructureResult {
    RadialForest forest;
    /// Parent links in discovery order; every node's descendants precede it.
    std::vector<EdgeSelection> edges;
    /// Nodes in the order they were selected (decreasing eps variance).
    std::vector<int> selection_order;
    int variance_ties = 0;

    bool ambiguous() const;
};

/// Recovers the operational forest from eps statistics alone. Nodes are
/// visited in decreasing variance; each discovered node attaches to the
/// first selected node that minimizes its centered squared difference over
/// the undiscovered set. `catalog`, when given, supplies impedances for the
/// recovered lines; otherwise they are left unknown.
StructureResult learn_structure(const MomentSet& moments, const NodeIndex& index,
                                const SubstationChildren& substation_children,
                                const LineCatalog* catalog = nullptr, const StructureOptions& options = {});

struct InjectionOptions {
    /// Solved variances below this are clamped up to it and flagged.
    double variance_floor = 0.0;
};

struct NodeInjectionDiagnostics {
    double raw_var_p = 0.0;
    double raw_var_q = 0.0;
    double raw_cov_pq = 0.0;
    bool clamped = false;
    bool nonpositive_cov = false;
};

struct InjectionEstimate {
    InjectionModel model;
    std::vector<NodeInjectionDiagnostics> nodes;
    bool any_clamped() const;
};

/// Per-edge 3x3 solve for (var_p, var_q, cov_pq) leaf-upward, subtracting the
/// descendant sums, then the mean injections from the voltage means.
/// Needs both channels and known impedances on every forest line.
InjectionEstimate estimate_injection_stats(const MomentSet& moments, const RadialForest& forest,
                                           const InjectionOptions& options = {});

/// Cross-check: applies the inverse LC-PF map to the full voltage covariance
/// (one shot, no leaf-upward recursion).
InjectionEstimate estimate_injection_stats_direct(const MomentSet& moments, const RadialForest& forest);

/// Solves the per-edge linear system for the subtree totals over D_a
/// (sum var_p, sum var_q, sum cov_pq). Throws SingularSystem if degenerate.
SubtreeSums solve_edge_system(double r, double x, const EdgeStatistics& observed);

/// Inverse of solve_lcpf: recovers (p, q) from (theta, eps).
struct Injections {
    Eigen::VectorXd p;
    Eigen::VectorXd q;
};
Injections invert_lcpf(const RadialForest& forest, const Eigen::VectorXd& theta, const Eigen::VectorXd& eps);

/// One full learning pass: structure then injection statistics.
struct LearnResult {
    StructureResult structure;
    InjectionEstimate injections;
};
LearnResult learn_structure_and_statistics(const MomentSet& moments, const NodeIndex& index,
                                           const SubstationChildren& substation_children, const LineCatalog& catalog,
                                           const StructureOptions& structure_options = {},
                                           const InjectionOptions& injection_options = {});

}  // namespace gridlearn
