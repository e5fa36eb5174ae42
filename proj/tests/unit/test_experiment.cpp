#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "gridlearn/experiment.hpp"

using namespace gridlearn;

namespace {

ErrorCode code_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::InvalidArgument;
}

std::string csv(const MetricsReport& r) {
    std::ostringstream out;
    write_curves_csv(out, r);
    return out.str();
}

ExperimentConfig small_config() {
    ExperimentConfig c;
    c.feeder = feeder_preset("bus_13_3");
    c.feeder_seed = 13;
    c.sample_grid = {100, 400};
    c.seeds = 3;
    c.base_seed = 7;
    c.tasks = {Task::structure, Task::params, Task::missing};
    c.missing_counts = {1, 2};
    c.threads = 1;
    return c;
}

}  // namespace

TEST_CASE("synthetic feeders are deterministic and match their spec") {
    const auto spec = feeder_preset("bus_29_1");
    const auto a = synth_feeder(spec, InjectionRanges{}, 5);
    const auto b = synth_feeder(spec, InjectionRanges{}, 5);
    const auto c = synth_feeder(spec, InjectionRanges{}, 6);
    CHECK(a.injections.var_p == b.injections.var_p);
    CHECK(edge_keys(a.forest) == edge_keys(b.forest));
    CHECK(a.injections.var_p != c.injections.var_p);
    CHECK(a.forest.num_loads() == 28);
    CHECK(a.forest.num_substations() == 1);
    CHECK(a.network.lines.size() == 28 + 1 + 20);
    for (int k = 0; k < 3; ++k) {
        CHECK(a.injections.cov_pq(k) > 0.0);
        CHECK(a.injections.cov_pq(k) <= std::sqrt(a.injections.var_p(k) * a.injections.var_q(k)));
    }
}

TEST_CASE("presets") {
    const auto big = feeder_preset("bus_83_11");
    CHECK(big.loads + big.substations == 83);
    CHECK(feeder_preset("bus_13_3").loads + feeder_preset("bus_13_3").substations == 13);
    CHECK(code_of([] { feeder_preset("bus_7_7"); }) == ErrorCode::InvalidArgument);
    const auto sf = synth_feeder(big, InjectionRanges{}, 1);
    CHECK(sf.forest.num_substations() == 11);
}

TEST_CASE("smallest feeder: one load, one substation") {
    FeederSpec s;
    s.loads = 1;
    s.substations = 1;
    s.tie_switches = 0;
    s.extra_open = 0;
    const auto sf = synth_feeder(s, InjectionRanges{}, 1);
    CHECK(sf.forest.num_loads() == 1);
    CHECK(sf.forest.parent(0) == NodeRef::substation(0));

    ExperimentConfig c;
    c.feeder = s;
    c.analytic = true;
    c.seeds = 2;
    c.tasks = {Task::structure, Task::params};
    const auto r = run_experiment(c);
    CHECK(r.failures.empty());
    CHECK(r.aggregate("structure", "structural_error").at(0) == 0.0);
}

TEST_CASE("infeasible specs are rejected") {
    FeederSpec s;
    s.loads = 2;
    s.substations = 3;
    CHECK(code_of([&] { synth_feeder(s, InjectionRanges{}, 1); }) == ErrorCode::InfeasibleSpec);
    s = FeederSpec{};
    s.extra_open = 10000;
    CHECK(code_of([&] { synth_feeder(s, InjectionRanges{}, 1); }) == ErrorCode::InfeasibleSpec);
    s = FeederSpec{};
    s.r_min = 0.0;
    CHECK(code_of([&] { synth_feeder(s, InjectionRanges{}, 1); }) == ErrorCode::InfeasibleSpec);
    InjectionRanges r;
    r.corr_max = 1.5;
    CHECK(code_of([&] { random_injections(3, r, 1); }) == ErrorCode::InfeasibleSpec);

    // Two loads, both on substations: no legal hidden node.
    FeederSpec flat;
    flat.loads = 2;
    flat.substations = 2;
    flat.tie_switches = 0;
    flat.extra_open = 0;
    const auto sf = synth_feeder(flat, InjectionRanges{}, 1);
    CHECK(code_of([&] { random_missing_set(sf.forest, 1, 1); }) == ErrorCode::InfeasibleSpec);

    ExperimentConfig c;
    CHECK(code_of([&] { run_experiment(c); }) == ErrorCode::InfeasibleSpec);
    c.sample_grid = {1};
    CHECK(code_of([&] { run_experiment(c); }) == ErrorCode::InfeasibleSpec);
    c.sample_grid = {10};
    c.seeds = 0;
    CHECK(code_of([&] { run_experiment(c); }) == ErrorCode::InfeasibleSpec);
}

TEST_CASE("hidden sets obey the spacing rules") {
    const auto sf = synth_feeder(feeder_preset("bus_29_1"), InjectionRanges{}, 3);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto h = random_missing_set(sf.forest, 3, seed);
        CHECK(h.size() == 3);
        CHECK(validate_missing_spec(sf.forest, h).empty());
    }
}

TEST_CASE("population moments give zero error on every task") {
    auto c = small_config();
    c.analytic = true;
    const auto r = run_experiment(c);
    CHECK(r.failures.empty());
    for (const char* task : {"structure", "params", "missing_1", "missing_2"}) {
        CAPTURE(task);
        CHECK(r.aggregate(task, "structural_error").at(0) == 0.0);
    }
    CHECK(r.aggregate("structure", "var_p_error").at(0) < 1e-8);
    CHECK(r.aggregate("params", "r_error").at(0) < 1e-6);
}

TEST_CASE("results do not depend on the thread count") {
    auto c = small_config();
    const auto one = csv(run_experiment(c));
    c.threads = 4;
    const auto four = csv(run_experiment(c));
    CHECK(one == four);
    CHECK(one.rfind("task,m,seed,metric,value\n", 0) == 0);
}

TEST_CASE("errors shrink with more samples") {
    ExperimentConfig c;
    c.feeder = feeder_preset("bus_13_3");
    c.feeder_seed = 13;
    c.sample_grid = {100, 1600};
    c.seeds = 10;
    const auto r = run_experiment(c);
    const auto var = r.aggregate("structure", "var_p_error");
    CHECK(var.at(1600) < var.at(100));
    const auto mu = r.aggregate("structure", "mu_p_error");
    CHECK(mu.at(1600) < mu.at(100));
}

TEST_CASE("fractional error helper") {
    Eigen::VectorXd t(2), e(2);
    t << 1.0, -2.0;
    e << 1.5, -1.0;
    CHECK(mean_fractional_error(e, t) == doctest::Approx(0.5));
    CHECK(code_of([&] { mean_fractional_error(e.head(1), t); }) == ErrorCode::DimensionMismatch);
    CHECK(task_name(Task::params) == "params");
}

TEST_CASE("curves match the stored golden file") {
    const auto got = csv(run_experiment(small_config()));
    const std::string path = std::string(GOLDEN_DIR) + "/small_curves.csv";
    if (std::getenv("GRIDLEARN_UPDATE_GOLDEN")) {
        std::ofstream(path) << got;
    }
    std::ifstream in(path);
    REQUIRE(in.good());
    std::stringstream want;
    want << in.rdbuf();
    CHECK(got == want.str());
}
