#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gridlearn/grid_model.hpp"
#include "gridlearn/lcpf.hpp"
#include "gridlearn/moments.hpp"
#include "gridlearn/topology_learner.hpp"

namespace gridlearn {

/// Loads without voltage data. Their injection statistics must be known;
/// the covariance vectors, when non-empty, run parallel to `hidden`.
struct MissingSpec {
    std::vector<int> hidden;
    std::vector<double> var_p;
    std::vector<double> var_q;
    std::vector<double> cov_pq;

    bool has_stats() const { return !var_p.empty(); }
};

/// Overwrites the hidden loads' covariance triples in `model` when the spec carries them.
void apply_missing_spec(InjectionModel& model, const MissingSpec& spec);

enum class ViolationKind { hidden_too_close, hidden_substation_child };

struct MissingViolation {
    ViolationKind kind;
    int a = -1;
    int b = -1;  // second hidden node for hidden_too_close
};

/// Hidden nodes must be at least three hops apart and must not hang directly
/// off a substation. Returns every violation against the true forest.
std::vector<MissingViolation> validate_missing_spec(const RadialForest& truth, std::span<const int> hidden);

/// Hop distance within a tree; nullopt across trees.
std::optional<int> hop_distance(const RadialForest& forest, int a, int b);

struct MatchTolerance {
    double rel = 1e-9;
    double abs = 0.0;
};

/// |lhs - rhs| <= rel * scale + abs.
bool residual_match(double lhs, double rhs, double scale, const MatchTolerance& tol);

enum class CheckKind { direct_edge, missing_leaf_child, missing_intermediate, parked };

/// One decision taken while placing a node.
struct MatchCheck {
    CheckKind kind = CheckKind::direct_edge;
    int node = -1;
    NodeRef parent;
    int hidden = -1;               // placed hidden node, -1 if none
    double lhs = 0.0;              // observed squared difference
    double rhs = 0.0;              // prediction for the accepted hypothesis (NaN when parked)
    double residual = 0.0;         // |lhs - rhs| / |lhs|
    double best_rejected = 0.0;    // smallest relative residual among rejected hypotheses (inf if none)
    bool matched = true;           // false for declared substation children accepted without a match
};

/// How the relative match tolerance shrinks with the sample count m.
/// inverse_sqrt: coef / sqrt(m).  log_inverse_sqrt: coef * sqrt(ln(m) / m), which
/// widens in units of the statistic's standard error as m grows, so false
/// rejections die out.
enum class ToleranceRule { inverse_sqrt, log_inverse_sqrt };

struct MissingOptions {
    StructureOptions structure;
    /// Fixed relative match tolerance. When unset: 1e-9 for analytic moments,
    /// otherwise from `rule` and `tol_coef` (3 / sqrt(m) by default).
    std::optional<double> tol_rel;
    ToleranceRule rule = ToleranceRule::inverse_sqrt;
    double tol_coef = 3.0;
    double tol_abs = 0.0;
    /// Return the edges found so far instead of throwing when placement fails.
    bool partial_on_failure = false;
};

struct MissingResult {
    /// Set on success.
    std::optional<RadialForest> forest;
    /// Every accepted edge (complete on success, partial otherwise).
    std::vector<EdgeKey> edges;
    std::vector<MatchCheck> checks;
    std::vector<int> placed_hidden;
    /// Set when placement failed and `partial_on_failure` was requested.
    std::optional<ErrorCode> failure;
    std::string failure_message;
};

/// Structure learning with hidden loads. Observed nodes are visited as in the
/// complete-data learner; each candidate edge is confirmed by comparing the
/// observed eps squared difference with the value predicted from the known
/// line impedances and injection statistics, either directly or with one
/// hidden node inserted below or between.
///
/// `known` supplies var_p, var_q and cov_pq for every load (hidden ones
/// included). `catalog` is the full line list, open lines included.
MissingResult learn_with_missing(const MomentSet& moments, const NodeIndex& index, std::span<const int> hidden,
                                 const InjectionModel& known, const LineCatalog& catalog,
                                 const SubstationChildren& substation_children, const MissingOptions& options = {});

/// Relative tolerance used when `MissingOptions::tol_rel` is unset.
double default_match_tolerance(const MomentSet& moments, ToleranceRule rule = ToleranceRule::inverse_sqrt,
                               double coef = 3.0);

}  // namespace gridlearn
