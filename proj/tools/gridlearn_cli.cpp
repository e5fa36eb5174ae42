#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gridlearn/experiment.hpp"
#include "gridlearn/io.hpp"
#include "gridlearn/line_estimator.hpp"
#include "gridlearn/missing_learner.hpp"
#include "gridlearn/moments.hpp"
#include "gridlearn/topology_learner.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gridlearn;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitLearner = 2;

// Thrown for bad flags or unreadable files; maps to exit code 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

bool is_learner_failure(ErrorCode c) {
    switch (c) {
        case ErrorCode::AmbiguousParent:
        case ErrorCode::IncompleteCover:
        case ErrorCode::SingularSystem:
        case ErrorCode::NegativeVarianceEstimate:
        case ErrorCode::NoRealRoot:
        case ErrorCode::BothRootsFeasible:
        case ErrorCode::NoConsistentPlacement:
        case ErrorCode::MissingImpedance:
            return true;
        default:
            return false;
    }
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    return in;
}

std::ofstream open_out(const fs::path& dir, const std::string& name) {
    fs::create_directories(dir);
    std::ofstream out(dir / name);
    if (!out) throw ConfigError("cannot write '" + (dir / name).string() + "'");
    return out;
}

json edge_json(const NodeIndex& index, int child, NodeRef parent) {
    return {{"child", index.id_of(NodeRef::load(child))}, {"parent", index.id_of(parent)}};
}

json injections_json(const InjectionModel& m, const NodeIndex& index) {
    json arr = json::array();
    for (int a = 0; a < m.size(); ++a) {
        arr.push_back({{"id", index.id_of(NodeRef::load(a))},
                       {"mu_p", m.mu_p(a)},
                       {"mu_q", m.mu_q(a)},
                       {"var_p", m.var_p(a)},
                       {"var_q", m.var_q(a)},
                       {"cov_pq", m.cov_pq(a)}});
    }
    return arr;
}

std::string check_kind_name(CheckKind k) {
    switch (k) {
        case CheckKind::direct_edge: return "direct_edge";
        case CheckKind::missing_leaf_child: return "missing_leaf_child";
        case CheckKind::missing_intermediate: return "missing_intermediate";
        case CheckKind::parked: return "parked";
    }
    return "?";
}

// Infinite margins (no competitor) are written as null.
json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// Where the voltage statistics come from.
struct DataSource {
    std::string network_path;
    std::string inj_path;
    std::string data_path;
    int samples = 0;
    std::uint64_t seed = 1;
    bool analytic = false;
    bool no_phase = false;
};

void add_data_flags(CLI::App* cmd, DataSource& src) {
    cmd->add_option("--network", src.network_path, "Network JSON (ground truth and line catalog)")->required();
    cmd->add_option("--inj", src.inj_path, "Injection model JSON");
    cmd->add_option("--data", src.data_path, "Voltage samples CSV (sample,node,eps,theta)");
    cmd->add_option("--samples", src.samples, "Simulate this many samples from --network and --inj");
    cmd->add_option("--seed", src.seed, "Seed for simulation");
    cmd->add_flag("--analytic", src.analytic, "Use population moments computed from --inj");
    cmd->add_flag("--no-phase", src.no_phase, "Discard phase angles before learning");
}

struct Problem {
    Network network;
    RadialForest truth;
    std::optional<InjectionModel> injections;
    std::optional<AnalyticMoments> analytic;
    std::optional<VoltageSamples> samples;

    MomentSet moments(const std::vector<int>& observed, bool no_phase) const {
        auto ms = analytic ? MomentSet::from_analytic(*analytic, observed) : MomentSet::from_samples(*samples, observed);
        return no_phase ? ms.without_phase() : ms;
    }
};

Problem load_problem(const DataSource& src) {
    Problem p;
    auto net_in = open_in(src.network_path);
    p.network = read_network(net_in);
    p.truth = build_forest(p.network);
    if (!src.inj_path.empty()) {
        auto in = open_in(src.inj_path);
        p.injections = read_injections(in, p.truth.index());
    }
    const int sources = (src.analytic ? 1 : 0) + (src.samples > 0 ? 1 : 0) + (!src.data_path.empty() ? 1 : 0);
    if (sources != 1) throw ConfigError("give exactly one of --data, --samples, --analytic");
    if ((src.analytic || src.samples > 0) && !p.injections) throw ConfigError("--analytic and --samples need --inj");
    if (src.analytic) {
        p.analytic = analytic_moments(p.truth, *p.injections);
    } else if (src.samples > 0) {
        p.samples = sample_voltages(p.truth, *p.injections, src.samples, src.seed);
    } else {
        auto in = open_in(src.data_path);
        p.samples = read_samples(in, p.truth.index());
    }
    return p;
}

std::vector<int> all_loads(int n) {
    std::vector<int> v(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) v[static_cast<std::size_t>(a)] = a;
    return v;
}

void write_json(const fs::path& dir, const std::string& name, const json& j) {
    auto out = open_out(dir, name);
    out << j.dump(2) << '\n';
}

void print_report_summary(const MetricsReport& report, const std::vector<std::string>& tasks,
                          const std::vector<std::string>& metrics) {
    for (const auto& t : tasks) {
        for (const auto& m : metrics) {
            const auto agg = report.aggregate(t, m);
            if (agg.empty()) continue;
            std::printf("%-12s %-16s", t.c_str(), m.c_str());
            for (const auto& [samples, v] : agg) std::printf("  m=%d:%.4g", samples, v);
            std::printf("\n");
        }
    }
    if (!report.failures.empty()) std::printf("%zu cell(s) reported learner failures\n", report.failures.size());
}

// Experiment config file; any field may be omitted.
//   {"preset": "bus_13_3", "feeder": {...FeederSpec...}, "network": "file.json",
//    "feeder_seed": 1, "seeds": 20, "base_seed": 1, "sample_grid": [...],
//    "missing_counts": [...], "analytic": false, "tol_rel": 0.01,
//    "tol_rule": "inverse_sqrt"|"log_inverse_sqrt", "tol_coef": 3, "threads": 0,
//    "injections": {...InjectionRanges...}}
ExperimentConfig read_config(const std::string& path) {
    ExperimentConfig c;
    if (path.empty()) return c;
    auto in = open_in(path);
    json j;
    try {
        j = json::parse(in);
        if (j.contains("preset")) c.feeder = feeder_preset(j["preset"].get<std::string>());
        if (j.contains("feeder")) {
            const auto& f = j["feeder"];
            c.feeder.loads = f.value("loads", c.feeder.loads);
            c.feeder.substations = f.value("substations", c.feeder.substations);
            c.feeder.tie_switches = f.value("tie_switches", c.feeder.tie_switches);
            c.feeder.extra_open = f.value("extra_open", c.feeder.extra_open);
            c.feeder.r_min = f.value("r_min", c.feeder.r_min);
            c.feeder.r_max = f.value("r_max", c.feeder.r_max);
            c.feeder.x_min = f.value("x_min", c.feeder.x_min);
            c.feeder.x_max = f.value("x_max", c.feeder.x_max);
            c.feeder.chain_bias = f.value("chain_bias", c.feeder.chain_bias);
        }
        if (j.contains("network")) {
            auto net_in = open_in(j["network"].get<std::string>());
            c.network = read_network(net_in);
        }
        if (j.contains("injections")) {
            const auto& r = j["injections"];
            auto& d = c.injections;
            d.mu_p_min = r.value("mu_p_min", d.mu_p_min);
            d.mu_p_max = r.value("mu_p_max", d.mu_p_max);
            d.mu_q_min = r.value("mu_q_min", d.mu_q_min);
            d.mu_q_max = r.value("mu_q_max", d.mu_q_max);
            d.var_p_min = r.value("var_p_min", d.var_p_min);
            d.var_p_max = r.value("var_p_max", d.var_p_max);
            d.var_q_min = r.value("var_q_min", d.var_q_min);
            d.var_q_max = r.value("var_q_max", d.var_q_max);
            d.corr_min = r.value("corr_min", d.corr_min);
            d.corr_max = r.value("corr_max", d.corr_max);
            if (r.value("distribution", std::string("gaussian")) == "uniform") {
                d.distribution = InjectionDistribution::uniform;
            }
        }
        c.feeder_seed = j.value("feeder_seed", c.feeder_seed);
        c.seeds = j.value("seeds", c.seeds);
        c.base_seed = j.value("base_seed", c.base_seed);
        c.sample_grid = j.value("sample_grid", c.sample_grid);
        c.missing_counts = j.value("missing_counts", c.missing_counts);
        c.analytic = j.value("analytic", c.analytic);
        if (j.contains("tol_rel")) c.tol_rel = j["tol_rel"].get<double>();
        if (j.value("tol_rule", std::string("inverse_sqrt")) == "log_inverse_sqrt") {
            c.tol_rule = ToleranceRule::log_inverse_sqrt;
        }
        c.tol_coef = j.value("tol_coef", c.tol_coef);
        c.threads = j.value("threads", c.threads);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, path + ": " + e.what());
    }
    return c;
}

struct ExperimentFlags {
    std::string config_path;
    std::string preset;
    std::string network_path;
    std::string out = "out";
    std::vector<int> grid;
    int seeds = 0;
    std::optional<std::uint64_t> seed;
    std::optional<double> tol_rel;
    bool analytic = false;
    int threads = 0;
};

void add_experiment_flags(CLI::App* cmd, ExperimentFlags& f) {
    cmd->add_option("--config", f.config_path, "Experiment config JSON; flags override it");
    cmd->add_option("--preset", f.preset, "Feeder preset: bus_13_3, bus_29_1, bus_83_11");
    cmd->add_option("--network", f.network_path, "Use this network instead of a synthetic feeder");
    cmd->add_option("--out", f.out, "Output directory");
    cmd->add_option("--grid", f.grid, "Sample counts");
    cmd->add_option("--seeds", f.seeds, "Number of seeds per sample count");
    cmd->add_option("--seed", f.seed, "Base seed");
    cmd->add_option("--tol-rel", f.tol_rel, "Fixed relative match tolerance for hidden-node checks");
    cmd->add_flag("--analytic", f.analytic, "Population moments instead of samples");
    cmd->add_option("--threads", f.threads, "Worker threads (0 = all cores)");
}

ExperimentConfig apply_flags(ExperimentConfig c, const ExperimentFlags& f) {
    if (!f.preset.empty()) c.feeder = feeder_preset(f.preset);
    if (!f.network_path.empty()) {
        auto in = open_in(f.network_path);
        c.network = read_network(in);
    }
    if (!f.grid.empty()) c.sample_grid = f.grid;
    if (f.seeds > 0) c.seeds = f.seeds;
    if (f.seed) c.base_seed = *f.seed;
    if (f.tol_rel) c.tol_rel = f.tol_rel;
    if (f.analytic) c.analytic = true;
    if (f.threads > 0) c.threads = f.threads;
    return c;
}

int run_and_write(const ExperimentConfig& config, const std::string& out_dir, const std::vector<std::string>& tasks,
                  const std::vector<std::string>& metrics) {
    const auto report = run_experiment(config);
    auto csv = open_out(out_dir, "curves.csv");
    write_curves_csv(csv, report);
    if (!report.failures.empty()) {
        auto log = open_out(out_dir, "failures.txt");
        for (const auto& f : report.failures) log << f << '\n';
    }
    print_report_summary(report, tasks, metrics);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Learn distribution grid topology, injection statistics and line parameters from voltage data"};
    app.require_subcommand(1);
    int status = 0;

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic feeder, injection model and hidden set");
    std::string synth_preset;
    FeederSpec spec;
    std::uint64_t synth_seed = 1;
    int synth_hidden = 0;
    std::string synth_out = "out";
    synth->add_option("--preset", synth_preset, "Feeder preset (overrides the size flags)");
    synth->add_option("--loads", spec.loads, "Load count");
    synth->add_option("--substations", spec.substations, "Substation count");
    synth->add_option("--ties", spec.tie_switches, "Open lines between trees");
    synth->add_option("--extra-open", spec.extra_open, "Other open lines");
    synth->add_option("--chain-bias", spec.chain_bias, "Probability of extending the newest branch");
    synth->add_option("--seed", synth_seed, "Seed");
    synth->add_option("--hidden", synth_hidden, "Also write missing.json with this many hidden loads");
    synth->add_option("--out", synth_out, "Output directory");
    synth->callback([&] {
        if (!synth_preset.empty()) spec = feeder_preset(synth_preset);
        const auto f = synth_feeder(spec, InjectionRanges{}, synth_seed);
        auto net = open_out(synth_out, "network.json");
        write_network(net, f.network);
        auto inj = open_out(synth_out, "injections.json");
        write_injections(inj, f.injections, f.forest.index());
        if (synth_hidden > 0) {
            MissingSpec ms;
            ms.hidden = random_missing_set(f.forest, synth_hidden, synth_seed);
            for (int d : ms.hidden) {
                ms.var_p.push_back(f.injections.var_p(d));
                ms.var_q.push_back(f.injections.var_q(d));
                ms.cov_pq.push_back(f.injections.cov_pq(d));
            }
            auto out = open_out(synth_out, "missing.json");
            write_missing_spec(out, ms, f.forest.index());
        }
        std::cout << describe_forest(f.forest);
    });

    // simulate
    auto* simulate = app.add_subcommand("simulate", "Draw voltage samples through the linear power flow model");
    std::string sim_network, sim_inj, sim_out = "out";
    int sim_samples = 1000;
    std::uint64_t sim_seed = 1;
    bool sim_no_phase = false;
    simulate->add_option("--network", sim_network, "Network JSON")->required();
    simulate->add_option("--inj", sim_inj, "Injection model JSON")->required();
    simulate->add_option("--samples", sim_samples, "Sample count");
    simulate->add_option("--seed", sim_seed, "Seed");
    simulate->add_flag("--no-phase", sim_no_phase, "Leave the theta column empty");
    simulate->add_option("--out", sim_out, "Output directory");
    simulate->callback([&] {
        auto net_in = open_in(sim_network);
        const auto forest = build_forest(read_network(net_in));
        auto inj_in = open_in(sim_inj);
        const auto inj = read_injections(inj_in, forest.index());
        auto samples = sample_voltages(forest, inj, sim_samples, sim_seed);
        if (sim_no_phase) samples.theta.resize(0, 0);
        auto out = open_out(sim_out, "samples.csv");
        write_samples(out, samples, forest.index());
    });

    // moments
    auto* moments_cmd = app.add_subcommand("moments", "Summarize voltage means, variances and squared differences");
    DataSource mom_src;
    std::string mom_out = "out";
    add_data_flags(moments_cmd, mom_src);
    moments_cmd->add_option("--out", mom_out, "Output directory");
    moments_cmd->callback([&] {
        const auto p = load_problem(mom_src);
        const int n = p.truth.num_loads();
        const auto ms = p.moments(all_loads(n), mom_src.no_phase);
        const auto& index = p.truth.index();
        json j;
        j["samples"] = ms.sample_count() ? json(*ms.sample_count()) : json(nullptr);
        j["nodes"] = json::array();
        json sq = json::array();
        for (int a = 0; a < n; ++a) {
            json node{{"id", index.id_of(NodeRef::load(a))},
                      {"mean_eps", ms.mean(Channel::eps, a)},
                      {"var_eps", ms.variance(Channel::eps, a)}};
            if (ms.has_phase()) {
                node["mean_theta"] = ms.mean(Channel::theta, a);
                node["var_theta"] = ms.variance(Channel::theta, a);
            }
            j["nodes"].push_back(node);
            json row = json::array();
            for (int b = 0; b < n; ++b) row.push_back(ms.sqdiff(Channel::eps, a, b));
            sq.push_back(row);
        }
        j["sqdiff_eps"] = sq;
        write_json(mom_out, "moments.json", j);
    });

    // learn
    auto* learn = app.add_subcommand("learn", "Recover the operational forest and injection statistics");
    DataSource learn_src;
    std::string learn_out = "out";
    double learn_floor = 0.0;
    add_data_flags(learn, learn_src);
    learn->add_option("--variance-floor", learn_floor, "Clamp solved variances to at least this value");
    learn->add_option("--out", learn_out, "Output directory");
    learn->callback([&] {
        const auto p = load_problem(learn_src);
        const auto& index = p.truth.index();
        const LineCatalog catalog(p.network, index);
        const auto ms = p.moments(all_loads(p.truth.num_loads()), learn_src.no_phase);
        const auto st = learn_structure(ms, index, substation_children(p.truth), &catalog);
        json j;
        j["edges"] = json::array();
        for (const auto& e : st.edges) {
            auto ej = edge_json(index, e.child, e.parent);
            ej["declared"] = e.declared;
            ej["sqdiff"] = e.sqdiff;
            ej["margin"] = number_or_null(e.margin);
            ej["ambiguous"] = e.ambiguous;
            j["edges"].push_back(ej);
        }
        j["variance_ties"] = st.variance_ties;
        j["structural_error"] = structural_error(p.truth, st.forest);
        if (ms.has_phase()) {
            InjectionOptions io;
            io.variance_floor = learn_floor;
            const auto est = estimate_injection_stats(ms, st.forest, io);
            j["injections"] = injections_json(est.model, index);
            j["clamped"] = est.any_clamped();
            if (p.injections) {
                j["errors"] = {{"mu_p", mean_fractional_error(est.model.mu_p, p.injections->mu_p)},
                               {"mu_q", mean_fractional_error(est.model.mu_q, p.injections->mu_q)},
                               {"var_p", mean_fractional_error(est.model.var_p, p.injections->var_p)},
                               {"var_q", mean_fractional_error(est.model.var_q, p.injections->var_q)},
                               {"cov_pq", mean_fractional_error(est.model.cov_pq, p.injections->cov_pq)}};
            }
        }
        write_json(learn_out, "result.json", j);
        std::cout << describe_forest(st.forest) << "structural error " << j["structural_error"].get<double>() << '\n';
    });

    // learn-params
    auto* params = app.add_subcommand("learn-params", "Recover the forest and line impedances given injection variances");
    DataSource par_src;
    std::string par_out = "out";
    add_data_flags(params, par_src);
    params->add_option("--out", par_out, "Output directory");
    params->callback([&] {
        if (par_src.inj_path.empty()) throw ConfigError("learn-params needs --inj for the known variances");
        const auto p = load_problem(par_src);
        const auto& index = p.truth.index();
        const auto ms = p.moments(all_loads(p.truth.num_loads()), par_src.no_phase);
        const auto res =
            learn_structure_and_params(ms, index, p.injections->var_p, p.injections->var_q, substation_children(p.truth));
        json j;
        j["edges"] = json::array();
        for (int a = 0; a < res.forest.num_loads(); ++a) {
            const auto& e = res.edges[static_cast<std::size_t>(a)];
            auto ej = edge_json(index, a, res.forest.parent(a));
            ej["r"] = e.r_hat;
            ej["x"] = e.x_hat;
            ej["cov_pq"] = e.cov_pq_hat;
            ej["residual"] = e.residual;
            ej["near_symmetric"] = e.near_symmetric;
            j["edges"].push_back(ej);
        }
        j["structural_error"] = structural_error(p.truth, res.forest);
        write_json(par_out, "result.json", j);
        std::cout << "structural error " << j["structural_error"].get<double>() << '\n';
    });

    // learn-missing
    auto* missing = app.add_subcommand("learn-missing", "Recover the forest with hidden loads");
    DataSource mis_src;
    std::string mis_spec_path, mis_out = "out";
    std::optional<double> mis_tol;
    missing->add_option("--missing", mis_spec_path, "Missing spec JSON")->required();
    missing->add_option("--tol-rel", mis_tol, "Relative match tolerance (default 3/sqrt(m))");
    missing->add_option("--out", mis_out, "Output directory");
    add_data_flags(missing, mis_src);
    missing->callback([&] {
        if (mis_src.inj_path.empty()) throw ConfigError("learn-missing needs --inj for the known covariances");
        const auto p = load_problem(mis_src);
        const auto& index = p.truth.index();
        auto spec_in = open_in(mis_spec_path);
        const auto spec = read_missing_spec(spec_in, index);
        InjectionModel known = *p.injections;
        apply_missing_spec(known, spec);
        std::vector<int> observed;
        for (int a = 0; a < p.truth.num_loads(); ++a) {
            if (std::find(spec.hidden.begin(), spec.hidden.end(), a) == spec.hidden.end()) observed.push_back(a);
        }
        const auto ms = p.moments(observed, mis_src.no_phase);
        MissingOptions mo;
        mo.tol_rel = mis_tol;
        const LineCatalog catalog(p.network, index);
        const auto res = learn_with_missing(ms, index, spec.hidden, known, catalog, substation_children(p.truth), mo);
        json j;
        j["edges"] = json::array();
        for (int a = 0; a < res.forest->num_loads(); ++a) j["edges"].push_back(edge_json(index, a, res.forest->parent(a)));
        j["checks"] = json::array();
        for (const auto& c : res.checks) {
            j["checks"].push_back({{"kind", check_kind_name(c.kind)},
                                   {"node", index.id_of(NodeRef::load(c.node))},
                                   {"parent", index.id_of(c.parent)},
                                   {"hidden", c.hidden >= 0 ? json(index.id_of(NodeRef::load(c.hidden))) : json(nullptr)},
                                   {"lhs", c.lhs},
                                   {"rhs", number_or_null(c.rhs)},
                                   {"residual", number_or_null(c.residual)},
                                   {"best_rejected", number_or_null(c.best_rejected)},
                                   {"matched", c.matched}});
        }
        j["structural_error"] = structural_error(p.truth, *res.forest);
        write_json(mis_out, "result.json", j);
        std::cout << describe_forest(*res.forest) << "structural error " << j["structural_error"].get<double>() << '\n';
    });

    // eval
    auto* eval = app.add_subcommand("eval", "Score a result file against the true network");
    std::string eval_network, eval_result;
    eval->add_option("--network", eval_network, "True network JSON")->required();
    eval->add_option("--result", eval_result, "result.json from a learn command")->required();
    eval->callback([&] {
        auto net_in = open_in(eval_network);
        const auto truth = build_forest(read_network(net_in));
        auto res_in = open_in(eval_result);
        json j;
        try {
            j = json::parse(res_in);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::ParseError, e.what());
        }
        std::vector<EdgeKey> edges;
        for (const auto& e : j.at("edges")) {
            edges.push_back(edge_key(truth.index().at(e.at("child").get<std::int64_t>()),
                                     truth.index().at(e.at("parent").get<std::int64_t>())));
        }
        const auto truth_edges = edge_keys(truth);
        std::printf("structural error %.6g (%zu true edges, %zu recovered)\n", structural_error(truth_edges, edges),
                    truth_edges.size(), edges.size());
    });

    // reproduce-fig4
    auto* fig4 = app.add_subcommand("reproduce-fig4", "Error decay of structure and injection statistics with m");
    ExperimentFlags f4;
    add_experiment_flags(fig4, f4);
    fig4->callback([&] {
        auto c = read_config(f4.config_path);
        if (f4.config_path.empty()) {
            c.feeder = feeder_preset("bus_13_3");
            c.sample_grid = {25, 50, 100, 200, 400, 800, 1600, 3200, 6400, 12800, 25600};
        }
        c = apply_flags(c, f4);
        c.tasks = {Task::structure};
        status = run_and_write(c, f4.out, {"structure"},
                               {"structural_error", "mu_p_error", "mu_q_error", "var_p_error", "var_q_error", "cov_pq_error"});
    });

    // reproduce-fig5
    auto* fig5 = app.add_subcommand("reproduce-fig5", "Structural error with hidden loads against m and |M|");
    ExperimentFlags f5;
    add_experiment_flags(fig5, f5);
    fig5->callback([&] {
        auto c = read_config(f5.config_path);
        if (f5.config_path.empty()) {
            c.feeder = feeder_preset("bus_13_3");
            c.sample_grid = {100, 200, 400, 800, 1600, 3200, 6400};
            c.missing_counts = {1, 2, 3};
            c.seeds = 100;
            c.tol_rule = ToleranceRule::log_inverse_sqrt;
            c.tol_coef = 2.0;
        }
        c = apply_flags(c, f5);
        c.tasks = {Task::missing};
        std::vector<std::string> names;
        for (int h : c.missing_counts) names.push_back("missing_" + std::to_string(h));
        status = run_and_write(c, f5.out, names, {"structural_error"});
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitConfig;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return is_learner_failure(e.code()) ? kExitLearner : kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    }
    return status;
}
