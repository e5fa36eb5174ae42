#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "gridlearn/grid_model.hpp"

namespace gridlearn {

/// Per-node joint distribution family used by the sampler. The learners never
/// look at this tag; it exists so tests can stress non-Gaussian loads.
enum class InjectionDistribution { gaussian, uniform };

/// Nodal injection statistics with diagonal covariances (loads are mutually
/// uncorrelated; p and q at one node are positively correlated).
struct InjectionModel {
    Eigen::VectorXd mu_p;
    Eigen::VectorXd mu_q;
    Eigen::VectorXd var_p;
    Eigen::VectorXd var_q;
    Eigen::VectorXd cov_pq;
    InjectionDistribution distribution = InjectionDistribution::gaussian;

    int size() const { return static_cast<int>(mu_p.size()); }
    static InjectionModel zeros(int n);
};

/// Throws InvalidCovariance when a node violates Cauchy-Schwarz or has a
/// negative variance, DimensionMismatch on ragged vectors.
void check_cauchy_schwarz(const InjectionModel& inj);

/// Full check of the uncorrelated-loads assumption: var_p, var_q > 0 and
/// cov_pq > 0 on every node, plus Cauchy-Schwarz. Throws AssumptionViolated.
void check_uncorrelated_loads(const InjectionModel& inj);

struct LcpfSolution {
    Eigen::VectorXd theta;
    Eigen::VectorXd eps;
};

/// theta = H^{-1}_x p - H^{-1}_r q,  eps = H^{-1}_r p + H^{-1}_x q.
LcpfSolution solve_lcpf(const RadialForest& forest, const Eigen::VectorXd& p, const Eigen::VectorXd& q);

/// Dense inverse weighted Laplacian built column by column from path sums.
Eigen::MatrixXd h_inverse_matrix(const RadialForest& forest, Weight w);

struct AnalyticMoments {
    Eigen::VectorXd mu_theta;
    Eigen::VectorXd mu_eps;
    Eigen::MatrixXd omega_theta;
    Eigen::MatrixXd omega_eps;
    Eigen::MatrixXd omega_theta_eps;  // E[(theta - mu)(eps - mu)^T]
    Eigen::MatrixXd omega_eps_theta;  // E[(eps - mu)(theta - mu)^T]
};

AnalyticMoments analytic_moments(const RadialForest& forest, const InjectionModel& inj);

/// m joint draws of (eps, theta) on the load nodes. Substations are the
/// reference and are not stored. Row j is sample j, column a is load a.
/// An empty `theta` means phase data is unavailable.
struct VoltageSamples {
    Eigen::MatrixXd eps;
    Eigen::MatrixXd theta;

    int count() const { return static_cast<int>(eps.rows()); }
    int num_loads() const { return static_cast<int>(eps.cols()); }
    bool has_phase() const { return theta.size() > 0; }
};

struct SamplerOptions {
    int chunk_size = 4096;
    int threads = 0;  // 0 = hardware concurrency
};

/// i.i.d. injection draws pushed through the LC-PF model. Each chunk of
/// `chunk_size` samples has its own RNG stream derived from (seed, chunk), so
/// the output is identical for any thread count.
VoltageSamples sample_voltages(const RadialForest& forest, const InjectionModel& inj, int m, std::uint64_t seed,
                               const SamplerOptions& options = {});

enum class Channel { eps, theta, cross };

/// E[(da - db)^2] for the eps/theta channels and E[d_eps d_theta] for cross,
/// where d = centered deviation of node a minus node b. General path form:
/// sums over every node of the tree.
double pairwise_sqdiff_analytic(const RadialForest& forest, const InjectionModel& inj, int a, int b,
                                Channel channel = Channel::eps);

/// Closed form for the edge (a, parent(a)), summing only over D_a.
/// The parent may be the slack.
double parent_sqdiff_closed_form(const RadialForest& forest, const InjectionModel& inj, int a,
                                 Channel channel = Channel::eps);

/// Sums of var_p, var_q and cov_pq over D_a.
struct SubtreeSums {
    double p = 0.0;
    double q = 0.0;
    double pq = 0.0;
};
SubtreeSums subtree_sums(const RadialForest& forest, const InjectionModel& inj, int a);

/// The three edge statistics predicted for impedance (r, x) and subtree sums.
struct EdgeStatistics {
    double eps = 0.0;    // A
    double theta = 0.0;  // B
    double cross = 0.0;  // C
};
EdgeStatistics predict_edge_statistics(double r, double x, const SubtreeSums& sums);

}  // namespace gridlearn
