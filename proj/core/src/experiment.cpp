#include "gridlearn/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>
#include <set>
#include <thread>

#include "gridlearn/line_estimator.hpp"
#include "gridlearn/moments.hpp"
#include "gridlearn/topology_learner.hpp"

namespace gridlearn {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0, std::uint64_t d = 0) {
    return splitmix(splitmix(splitmix(splitmix(a) ^ b) ^ c) ^ d);
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
    return std::mt19937_64(seq);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

void infeasible_if(bool bad, const std::string& msg) {
    if (bad) throw Error(ErrorCode::InfeasibleSpec, msg);
}

std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

FeederSpec feeder_preset(std::string_view name) {
    FeederSpec s;
    if (name == "bus_13_3") {
        s.loads = 10, s.substations = 3, s.tie_switches = 3, s.extra_open = 10;
    } else if (name == "bus_29_1") {
        s.loads = 28, s.substations = 1, s.tie_switches = 1, s.extra_open = 20;
    } else if (name == "bus_83_11") {
        s.loads = 72, s.substations = 11, s.tie_switches = 13, s.extra_open = 30;
    } else {
        throw Error(ErrorCode::InvalidArgument, "unknown feeder preset '" + std::string(name) + "'");
    }
    return s;
}

InjectionModel random_injections(int loads, const InjectionRanges& r, std::uint64_t seed) {
    infeasible_if(loads < 1, "need at least one load");
    infeasible_if(!(r.var_p_min > 0.0) || !(r.var_q_min > 0.0) || r.var_p_min > r.var_p_max ||
                      r.var_q_min > r.var_q_max || r.mu_p_min > r.mu_p_max || r.mu_q_min > r.mu_q_max,
                  "injection ranges must be ordered with positive variances");
    infeasible_if(!(r.corr_min > 0.0) || r.corr_min > r.corr_max || r.corr_max > 1.0,
                  "p/q correlation range must lie in (0, 1]");
    auto rng = make_rng(seed, 0x11u);
    InjectionModel m = InjectionModel::zeros(loads);
    m.distribution = r.distribution;
    for (int a = 0; a < loads; ++a) {
        m.mu_p(a) = uniform(rng, r.mu_p_min, r.mu_p_max);
        m.mu_q(a) = uniform(rng, r.mu_q_min, r.mu_q_max);
        m.var_p(a) = uniform(rng, r.var_p_min, r.var_p_max);
        m.var_q(a) = uniform(rng, r.var_q_min, r.var_q_max);
        m.cov_pq(a) = uniform(rng, r.corr_min, r.corr_max) * std::sqrt(m.var_p(a) * m.var_q(a));
    }
    return m;
}

SyntheticFeeder synth_feeder(const FeederSpec& spec, const InjectionRanges& ranges, std::uint64_t seed) {
    const int n = spec.loads;
    const int k = spec.substations;
    infeasible_if(n < 1 || k < 1, "need at least one load and one substation");
    infeasible_if(n < k, "every substation needs at least one load");
    infeasible_if(spec.tie_switches < 0 || spec.extra_open < 0, "open line counts must be non-negative");
    infeasible_if(!(spec.r_min > 0.0) || !(spec.x_min > 0.0) || spec.r_min > spec.r_max || spec.x_min > spec.x_max,
                  "impedance ranges must be positive and ordered");
    infeasible_if(!(spec.chain_bias >= 0.0 && spec.chain_bias <= 1.0), "chain_bias must lie in [0, 1]");

    auto rng = make_rng(seed, 0x22u);
    // Node ids: substations 1..K, loads K+1..K+N.
    auto sub_id = [](int s) { return static_cast<std::int64_t>(s + 1); };
    auto load_id = [k](int a) { return static_cast<std::int64_t>(k + a + 1); };

    SyntheticFeeder out;
    for (int s = 0; s < k; ++s) out.network.nodes.push_back({sub_id(s), NodeRole::substation});
    for (int a = 0; a < n; ++a) out.network.nodes.push_back({load_id(a), NodeRole::load});

    std::vector<int> tree_of(static_cast<std::size_t>(n));
    std::vector<std::vector<int>> members(static_cast<std::size_t>(k));
    std::set<std::pair<std::int64_t, std::int64_t>> used;
    auto use = [&](std::int64_t u, std::int64_t v) { return used.insert({std::min(u, v), std::max(u, v)}).second; };

    for (int a = 0; a < n; ++a) {
        const int t = a < k ? a : std::uniform_int_distribution<int>(0, k - 1)(rng);
        tree_of[static_cast<std::size_t>(a)] = t;
        auto& tm = members[static_cast<std::size_t>(t)];
        std::int64_t parent = sub_id(t);
        if (!tm.empty()) {
            if (uniform(rng, 0.0, 1.0) < spec.chain_bias) {
                parent = load_id(tm.back());
            } else {
                const auto pick = std::uniform_int_distribution<std::size_t>(0, tm.size())(rng);
                if (pick < tm.size()) parent = load_id(tm[pick]);
            }
        }
        tm.push_back(a);
        use(load_id(a), parent);
        out.network.lines.push_back(
            {load_id(a), parent, uniform(rng, spec.r_min, spec.r_max), uniform(rng, spec.x_min, spec.x_max)});
    }

    auto add_open = [&](std::int64_t u, std::int64_t v) {
        out.network.lines.push_back({u, v, uniform(rng, spec.r_min, spec.r_max), uniform(rng, spec.x_min, spec.x_max),
                                     LineStatus::open});
    };
    const long long total_nodes = n + k;
    const long long free_pairs = total_nodes * (total_nodes - 1) / 2 - static_cast<long long>(k) * (k - 1) / 2 - n;
    infeasible_if(spec.tie_switches + spec.extra_open > free_pairs, "not enough node pairs for the open lines");

    const int max_attempts = 1000 * (spec.tie_switches + spec.extra_open + 1);
    int attempts = 0;
    std::uniform_int_distribution<int> any_load(0, n - 1);
    for (int placed = 0; placed < spec.tie_switches;) {
        infeasible_if(++attempts > max_attempts, "could not place the requested tie switches");
        const int u = any_load(rng);
        const int v = any_load(rng);
        if (u == v) continue;
        if (k > 1 && tree_of[static_cast<std::size_t>(u)] == tree_of[static_cast<std::size_t>(v)]) continue;
        if (!use(load_id(u), load_id(v))) continue;
        add_open(load_id(u), load_id(v));
        ++placed;
    }
    std::uniform_int_distribution<int> any_node(0, n + k - 1);
    auto node_id = [&](int i) { return i < k ? sub_id(i) : load_id(i - k); };
    for (int placed = 0; placed < spec.extra_open;) {
        infeasible_if(++attempts > max_attempts, "could not place the requested open lines");
        const int u = any_node(rng);
        const int v = any_node(rng);
        if (u == v || (u < k && v < k)) continue;
        if (!use(node_id(u), node_id(v))) continue;
        add_open(node_id(u), node_id(v));
        ++placed;
    }

    out.forest = build_forest(out.network);
    out.injections = random_injections(n, ranges, mix(seed, 0x33u));
    return out;
}

std::vector<int> random_missing_set(const RadialForest& forest, int count, std::uint64_t seed) {
    infeasible_if(count < 0, "missing count must be non-negative");
    if (count == 0) return {};
    std::vector<int> candidates;
    for (int a = 0; a < forest.num_loads(); ++a) {
        if (forest.parent(a).is_load()) candidates.push_back(a);
    }
    infeasible_if(static_cast<int>(candidates.size()) < count, "too few loads away from the substations");
    auto rng = make_rng(seed, 0x44u);
    for (int attempt = 0; attempt < 500; ++attempt) {
        std::shuffle(candidates.begin(), candidates.end(), rng);
        std::vector<int> chosen;
        for (int c : candidates) {
            const bool spaced = std::all_of(chosen.begin(), chosen.end(), [&](int h) {
                const auto d = hop_distance(forest, c, h);
                return !d || *d > 2;
            });
            if (spaced) chosen.push_back(c);
            if (static_cast<int>(chosen.size()) == count) {
                std::sort(chosen.begin(), chosen.end());
                return chosen;
            }
        }
    }
    throw Error(ErrorCode::InfeasibleSpec, "no hidden set of size " + std::to_string(count) + " fits this feeder");
}

std::string task_name(Task task) {
    switch (task) {
        case Task::structure: return "structure";
        case Task::params: return "params";
        case Task::missing: return "missing";
    }
    return "?";
}

double mean_fractional_error(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth) {
    if (estimate.size() != truth.size() || truth.size() == 0) {
        throw Error(ErrorCode::DimensionMismatch, "fractional error needs equal, non-empty vectors");
    }
    return ((estimate - truth).cwiseAbs().array() / truth.cwiseAbs().array()).mean();
}

std::map<int, double> MetricsReport::aggregate(std::string_view task, std::string_view metric) const {
    std::map<int, std::pair<double, int>> acc;
    for (const auto& r : rows) {
        if (r.task != task || r.metric != metric) continue;
        auto& [sum, count] = acc[r.m];
        sum += r.value;
        ++count;
    }
    std::map<int, double> out;
    for (const auto& [m, sc] : acc) out[m] = sc.first / sc.second;
    return out;
}

void write_curves_csv(std::ostream& out, const MetricsReport& report) {
    out << "task,m,seed,metric,value\n";
    for (const auto& r : report.rows) {
        out << r.task << ',' << r.m << ',' << r.seed << ',' << r.metric << ',' << format_value(r.value) << '\n';
    }
}

MetricsReport run_experiment(const ExperimentConfig& config) {
    infeasible_if(!config.analytic && config.sample_grid.empty(), "empty sample grid");
    for (int m : config.sample_grid) infeasible_if(!config.analytic && m < 2, "every sample count must be >= 2");
    infeasible_if(config.seeds < 1, "need at least one seed");
    infeasible_if(config.tasks.empty(), "no tasks selected");

    const Network net =
        config.network ? *config.network : synth_feeder(config.feeder, config.injections, config.feeder_seed).network;
    const RadialForest truth = build_forest(net);
    const NodeIndex& index = truth.index();
    const LineCatalog catalog(net, index);
    const auto subs = substation_children(truth);
    const auto truth_edges = edge_keys(truth);
    const int n = truth.num_loads();

    // Expand tasks into named runs; missing gets one run per hidden count.
    struct Run {
        Task task;
        int hidden = 0;
        std::string name;
    };
    std::vector<Run> runs;
    for (Task t : config.tasks) {
        if (t != Task::missing) {
            runs.push_back({t, 0, task_name(t)});
            continue;
        }
        for (int c : config.missing_counts) {
            random_missing_set(truth, c, mix(config.base_seed, 3, 0, static_cast<std::uint64_t>(c)));
            runs.push_back({t, c, "missing_" + std::to_string(c)});
        }
    }

    const std::vector<int> grid = config.analytic ? std::vector<int>{0} : config.sample_grid;
    struct Cell {
        int m;
        int seed;
        std::vector<MetricRow> rows;
        std::vector<std::string> failures;
    };
    std::vector<Cell> cells;
    for (std::size_t r = 0; r < grid.size(); ++r) {
        for (int s = 0; s < config.seeds; ++s) cells.push_back({grid[r], s, {}, {}});
    }

    auto run_cell = [&](Cell& cell) {
        const auto seed = static_cast<std::uint64_t>(cell.seed);
        const InjectionModel inj = random_injections(n, config.injections, mix(config.base_seed, 1, seed));
        std::optional<AnalyticMoments> analytic;
        std::optional<VoltageSamples> samples;
        if (config.analytic) {
            analytic = analytic_moments(truth, inj);
        } else {
            SamplerOptions so;
            so.threads = 1;
            samples = sample_voltages(truth, inj, cell.m,
                                      mix(config.base_seed, 2, seed, static_cast<std::uint64_t>(cell.m)), so);
        }
        auto moments_for = [&](const std::vector<int>& observed) {
            return analytic ? MomentSet::from_analytic(*analytic, observed) : MomentSet::from_samples(*samples, observed);
        };
        std::vector<int> everyone(static_cast<std::size_t>(n));
        for (int a = 0; a < n; ++a) everyone[static_cast<std::size_t>(a)] = a;

        for (const auto& run : runs) {
            auto emit = [&](const std::string& metric, double value) {
                cell.rows.push_back({run.name, cell.m, cell.seed, metric, value});
            };
            auto fail = [&](const std::string& what) {
                cell.failures.push_back(run.name + " m=" + std::to_string(cell.m) + " seed=" + std::to_string(cell.seed) +
                                        ": " + what);
            };
            bool failed = false;
            try {
                if (run.task == Task::structure) {
                    const auto ms = moments_for(everyone);
                    const auto st = learn_structure(ms, index, subs, &catalog);
                    emit("structural_error", structural_error(truth, st.forest));
                    try {
                        InjectionOptions io;
                        io.variance_floor = config.variance_floor;
                        const auto est = estimate_injection_stats(ms, st.forest, io);
                        emit("mu_p_error", mean_fractional_error(est.model.mu_p, inj.mu_p));
                        emit("mu_q_error", mean_fractional_error(est.model.mu_q, inj.mu_q));
                        emit("var_p_error", mean_fractional_error(est.model.var_p, inj.var_p));
                        emit("var_q_error", mean_fractional_error(est.model.var_q, inj.var_q));
                        emit("cov_pq_error", mean_fractional_error(est.model.cov_pq, inj.cov_pq));
                    } catch (const Error& e) {
                        failed = true;
                        fail(e.what());
                    }
                } else if (run.task == Task::params) {
                    const auto ms = moments_for(everyone);
                    const auto pr = learn_structure_and_params(ms, index, inj.var_p, inj.var_q, subs);
                    emit("structural_error", structural_error(truth, pr.forest));
                    Eigen::VectorXd r_hat(n), r_true(n), x_hat(n), x_true(n);
                    for (int a = 0; a < n; ++a) {
                        r_hat(a) = pr.forest.impedance(a).r;
                        x_hat(a) = pr.forest.impedance(a).x;
                        r_true(a) = truth.impedance(a).r;
                        x_true(a) = truth.impedance(a).x;
                    }
                    emit("r_error", mean_fractional_error(r_hat, r_true));
                    emit("x_error", mean_fractional_error(x_hat, x_true));
                    emit("cov_pq_error", mean_fractional_error(pr.cov_pq_hat, inj.cov_pq));
                } else {
                    const auto hidden = random_missing_set(
                        truth, run.hidden, mix(config.base_seed, 3, seed + 1, static_cast<std::uint64_t>(run.hidden)));
                    std::vector<int> observed;
                    for (int a = 0; a < n; ++a) {
                        if (!std::binary_search(hidden.begin(), hidden.end(), a)) observed.push_back(a);
                    }
                    const auto ms = moments_for(observed);
                    MissingOptions mo;
                    mo.tol_rel = config.tol_rel;
                    mo.rule = config.tol_rule;
                    mo.tol_coef = config.tol_coef;
                    mo.partial_on_failure = true;
                    const auto res = learn_with_missing(ms, index, hidden, inj, catalog, subs, mo);
                    emit("structural_error", structural_error(truth_edges, res.edges));
                    if (res.failure) {
                        failed = true;
                        fail(res.failure_message);
                    }
                }
            } catch (const Error& e) {
                failed = true;
                fail(e.what());
                if (std::none_of(cell.rows.begin(), cell.rows.end(), [&](const MetricRow& r) {
                        return r.task == run.name && r.metric == "structural_error";
                    })) {
                    emit("structural_error", 1.0);
                }
            }
            emit("failed", failed ? 1.0 : 0.0);
        }
    };

    int threads = config.threads > 0 ? config.threads : static_cast<int>(std::thread::hardware_concurrency());
    threads = std::clamp(threads, 1, static_cast<int>(cells.size()));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) run_cell(cells[i]);
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    MetricsReport report;
    for (const auto& run : runs) {
        for (const auto& cell : cells) {
            for (const auto& row : cell.rows) {
                if (row.task == run.name) report.rows.push_back(row);
            }
        }
    }
    for (const auto& cell : cells) {
        report.failures.insert(report.failures.end(), cell.failures.begin(), cell.failures.end());
    }
    return report;
}

}  // namespace gridlearn
