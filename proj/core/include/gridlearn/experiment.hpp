#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gridlearn/grid_model.hpp"
#include "gridlearn/lcpf.hpp"
#include "gridlearn/missing_learner.hpp"

namespace gridlearn {

struct FeederSpec {
    int loads = 10;
    int substations = 3;
    /// Open lines between loads of different trees (any two loads when K = 1).
    int tie_switches = 3;
    /// Further open lines between arbitrary non-adjacent node pairs.
    int extra_open = 10;
    double r_min = 0.01;
    double r_max = 0.05;
    double x_min = 0.01;
    double x_max = 0.05;
    /// Probability that a new load extends the most recent node of its tree
    /// instead of hanging off a uniformly chosen one. Higher means deeper trees.
    double chain_bias = 0.5;
};

/// Presets named after the bus counts they mirror: "bus_13_3", "bus_29_1", "bus_83_11".
/// Bus counts include the substations.
FeederSpec feeder_preset(std::string_view name);

struct InjectionRanges {
    double mu_p_min = 0.2;
    double mu_p_max = 1.0;
    double mu_q_min = 0.05;
    double mu_q_max = 0.4;
    double var_p_min = 0.5e-2;
    double var_p_max = 2e-2;
    double var_q_min = 0.2e-2;
    double var_q_max = 1e-2;
    /// Correlation between p and q at a node, drawn uniformly in [min, max].
    double corr_min = 0.2;
    double corr_max = 0.8;
    InjectionDistribution distribution = InjectionDistribution::gaussian;
};

struct SyntheticFeeder {
    Network network;
    RadialForest forest;
    InjectionModel injections;
};

/// Throws InfeasibleSpec when the spec cannot be met.
SyntheticFeeder synth_feeder(const FeederSpec& spec, const InjectionRanges& ranges, std::uint64_t seed);
InjectionModel random_injections(int loads, const InjectionRanges& ranges, std::uint64_t seed);

/// Random hidden set obeying the spacing rules; InfeasibleSpec if none found.
std::vector<int> random_missing_set(const RadialForest& forest, int count, std::uint64_t seed);

enum class Task { structure, params, missing };

struct ExperimentConfig {
    FeederSpec feeder;
    /// Used instead of `feeder` when set.
    std::optional<Network> network;
    std::uint64_t feeder_seed = 1;
    InjectionRanges injections;
    std::vector<int> sample_grid;
    int seeds = 20;
    std::uint64_t base_seed = 1;
    std::vector<Task> tasks{Task::structure};
    std::vector<int> missing_counts{1};
    /// Population moments instead of samples; the sample grid is ignored and m is reported as 0.
    bool analytic = false;
    std::optional<double> tol_rel;
    ToleranceRule tol_rule = ToleranceRule::inverse_sqrt;
    double tol_coef = 3.0;
    double variance_floor = 0.0;
    int threads = 0;
};

struct MetricRow {
    std::string task;
    int m = 0;
    int seed = 0;
    std::string metric;
    double value = 0.0;
};

struct MetricsReport {
    std::vector<MetricRow> rows;
    /// Learner failures, one line per failed cell and task.
    std::vector<std::string> failures;

    /// Mean over seeds of one metric, keyed by m.
    std::map<int, double> aggregate(std::string_view task, std::string_view metric) const;
};

/// Runs every (m, seed) cell; failures are recorded, not thrown.
/// Throws InfeasibleSpec for an unusable config.
MetricsReport run_experiment(const ExperimentConfig& config);

/// `task,m,seed,metric,value`, rows in report order.
void write_curves_csv(std::ostream& out, const MetricsReport& report);

std::string task_name(Task task);

/// Mean over loads of |estimate - truth| / |truth|.
double mean_fractional_error(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth);

}  // namespace gridlearn
