#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "gridlearn/experiment.hpp"
#include "gridlearn/missing_learner.hpp"
#include "oracles.hpp"
#include "random_feeders.hpp"

using namespace gridlearn;
namespace gt = gridlearn::testing;

namespace {

struct Case {
    Network net;
    RadialForest truth;
    InjectionModel inj;
};

Case make(Network net) {
    auto f = build_forest(net);
    auto inj = gt::simple_injections(f.num_loads());
    return {std::move(net), std::move(f), std::move(inj)};
}

MomentSet observe_all_but(const Case& c, const std::vector<int>& hidden) {
    std::vector<int> seen;
    for (int a = 0; a < c.truth.num_loads(); ++a) {
        if (std::find(hidden.begin(), hidden.end(), a) == hidden.end()) seen.push_back(a);
    }
    return MomentSet::from_analytic(analytic_moments(c.truth, c.inj), seen);
}

int idx(const Case& c, std::int64_t id) { return c.truth.index().at(id).index; }

ErrorCode code_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::InvalidArgument;
}

// 100 -> 1 -> 2 -> 3 with load 3 a hidden leaf.
Case leaf_case() {
    gt::Builder b;
    b.substation(100).load(1).load(2).load(3).load(4);
    b.line(100, 1, 0.02, 0.03).line(1, 2, 0.01, 0.04).line(2, 3, 0.03, 0.02).line(1, 4, 0.025, 0.015);
    b.line(1, 3, 0.04, 0.04, LineStatus::open).line(3, 4, 0.02, 0.05, LineStatus::open);
    return make(b.net);
}

// 100 -> 1 -> 2 -> {3, 4} with load 2 hidden between 1 and its children.
Case intermediate_case() {
    gt::Builder b;
    b.substation(100).load(1).load(2).load(3).load(4);
    b.line(100, 1, 0.02, 0.03).line(1, 2, 0.01, 0.04).line(2, 3, 0.03, 0.02).line(2, 4, 0.025, 0.015);
    b.line(1, 3, 0.04, 0.04, LineStatus::open).line(3, 4, 0.02, 0.05, LineStatus::open);
    return make(b.net);
}

}  // namespace

TEST_CASE("hidden leaf is placed under its parent") {
    const auto c = leaf_case();
    const std::vector<int> hidden{idx(c, 3)};
    const LineCatalog catalog(c.net, c.truth.index());
    const auto res = learn_with_missing(observe_all_but(c, hidden), c.truth.index(), hidden, c.inj, catalog,
                                        substation_children(c.truth));
    REQUIRE(res.forest.has_value());
    CHECK(structural_error(c.truth, *res.forest) == 0.0);
    CHECK(res.placed_hidden == hidden);
    const auto it = std::find_if(res.checks.begin(), res.checks.end(),
                                 [](const MatchCheck& m) { return m.kind == CheckKind::missing_leaf_child; });
    REQUIRE(it != res.checks.end());
    CHECK(it->node == idx(c, 2));
    CHECK(it->hidden == idx(c, 3));
    CHECK(it->residual < 1e-9);
    CHECK(it->best_rejected > 1e-9);
}

TEST_CASE("hidden intermediate node adopts the parked siblings") {
    const auto c = intermediate_case();
    const std::vector<int> hidden{idx(c, 2)};
    const LineCatalog catalog(c.net, c.truth.index());
    const auto res = learn_with_missing(observe_all_but(c, hidden), c.truth.index(), hidden, c.inj, catalog,
                                        substation_children(c.truth));
    REQUIRE(res.forest.has_value());
    CHECK(structural_error(c.truth, *res.forest) == 0.0);
    CHECK(res.forest->parent(idx(c, 3)) == NodeRef::load(idx(c, 2)));
    CHECK(res.forest->parent(idx(c, 4)) == NodeRef::load(idx(c, 2)));
    int parked = 0, intermediate = 0;
    for (const auto& m : res.checks) {
        parked += m.kind == CheckKind::parked;
        intermediate += m.kind == CheckKind::missing_intermediate;
    }
    CHECK(parked == 2);
    CHECK(intermediate == 1);
    CHECK(res.forest->has_impedances());
}

TEST_CASE("random feeders with random hidden sets are recovered from population moments") {
    std::mt19937_64 rng(404);
    int done = 0;
    while (done < 40) {
        const auto sf = synth_feeder(gt::random_spec(rng, 40, 4, 50), InjectionRanges{}, rng());
        std::vector<int> hidden;
        try {
            hidden = random_missing_set(sf.forest, 1 + static_cast<int>(rng() % 3), rng());
        } catch (const Error&) {
            continue;
        }
        ++done;
        CHECK(validate_missing_spec(sf.forest, hidden).empty());
        std::vector<int> seen;
        for (int a = 0; a < sf.forest.num_loads(); ++a) {
            if (std::find(hidden.begin(), hidden.end(), a) == hidden.end()) seen.push_back(a);
        }
        const auto ms = MomentSet::from_analytic(analytic_moments(sf.forest, sf.injections), seen);
        const LineCatalog catalog(sf.network, sf.forest.index());
        const auto res = learn_with_missing(ms, sf.forest.index(), hidden, sf.injections, catalog,
                                            substation_children(sf.forest));
        REQUIRE(res.forest.has_value());
        CHECK(structural_error(sf.forest, *res.forest) == 0.0);
        for (const auto& m : res.checks) {
            if (m.kind != CheckKind::parked && m.matched) CHECK(m.best_rejected > m.residual);
        }
    }
}

TEST_CASE("spacing and placement rules are reported") {
    gt::Builder b;
    b.substation(100);
    for (int id = 1; id <= 5; ++id) b.load(id);
    b.line(100, 1, 0.01, 0.02).line(1, 2, 0.01, 0.02).line(2, 3, 0.01, 0.02).line(3, 4, 0.01, 0.02).line(4, 5, 0.01, 0.02);
    const auto f = build_forest(b.net);
    const auto at = [&](std::int64_t id) { return f.index().at(id).index; };

    CHECK(hop_distance(f, at(1), at(4)) == 3);
    CHECK(hop_distance(f, at(5), at(5)) == 0);

    const std::vector<int> ok{at(2), at(5)};
    CHECK(validate_missing_spec(f, ok).empty());

    const std::vector<int> close{at(2), at(4)};
    const auto v = validate_missing_spec(f, close);
    REQUIRE(v.size() == 1);
    CHECK(v[0].kind == ViolationKind::hidden_too_close);

    const std::vector<int> top{at(1)};
    const auto w = validate_missing_spec(f, top);
    REQUIRE(w.size() == 1);
    CHECK(w[0].kind == ViolationKind::hidden_substation_child);
}

TEST_CASE("residual matching and default tolerances") {
    CHECK(residual_match(1.0, 1.0 + 1e-10, 1.0, {}));
    CHECK_FALSE(residual_match(1.0, 1.001, 1.0, {}));
    CHECK(residual_match(1.0, 1.001, 1.0, {.rel = 0.0, .abs = 0.01}));

    VoltageSamples s;
    s.eps = Eigen::MatrixXd::Random(400, 2);
    const auto ms = MomentSet::from_samples(s);
    CHECK(default_match_tolerance(ms) == doctest::Approx(3.0 / 20.0));
    CHECK(default_match_tolerance(ms, ToleranceRule::log_inverse_sqrt, 2.0) ==
          doctest::Approx(2.0 * std::sqrt(std::log(400.0) / 400.0)));
    const auto c = leaf_case();
    CHECK(default_match_tolerance(MomentSet::from_analytic(analytic_moments(c.truth, c.inj))) == 1e-9);
}

TEST_CASE("input contracts") {
    const auto c = leaf_case();
    const LineCatalog catalog(c.net, c.truth.index());
    const auto subs = substation_children(c.truth);

    SUBCASE("a hidden substation child breaks the assumptions") {
        const std::vector<int> hidden{idx(c, 1)};
        CHECK(code_of([&] {
                  learn_with_missing(observe_all_but(c, hidden), c.truth.index(), hidden, c.inj, catalog, subs);
              }) == ErrorCode::AssumptionViolated);
    }
    SUBCASE("a node cannot be hidden and observed") {
        const std::vector<int> hidden{idx(c, 3)};
        const auto all = MomentSet::from_analytic(analytic_moments(c.truth, c.inj));
        CHECK(code_of([&] { learn_with_missing(all, c.truth.index(), hidden, c.inj, catalog, subs); }) ==
              ErrorCode::InvalidArgument);
    }
    SUBCASE("every load is observed or hidden") {
        const std::vector<int> hidden{idx(c, 3)};
        const std::vector<int> none;
        CHECK(code_of([&] {
                  learn_with_missing(observe_all_but(c, hidden), c.truth.index(), none, c.inj, catalog, subs);
              }) == ErrorCode::IncompleteCover);
    }
    SUBCASE("spec statistics overwrite the model") {
        auto model = c.inj;
        const MissingSpec spec{{idx(c, 3)}, {0.5}, {0.25}, {0.1}};
        apply_missing_spec(model, spec);
        CHECK(model.var_p(idx(c, 3)) == 0.5);
        CHECK(model.cov_pq(idx(c, 3)) == 0.1);
        const MissingSpec ragged{{idx(c, 3)}, {0.5}, {}, {}};
        CHECK(code_of([&] { apply_missing_spec(model, ragged); }) == ErrorCode::DimensionMismatch);
    }
}

TEST_CASE("a missing catalog line makes placement fail, with partial edges on request") {
    auto c = intermediate_case();
    // Drop the tie 1-3 and the line 2-4: node 4 can no longer sit under hidden 2.
    Network cut = c.net;
    cut.lines.erase(std::remove_if(cut.lines.begin(), cut.lines.end(),
                                   [](const Line& l) { return l.a == 2 && l.b == 4; }),
                    cut.lines.end());
    const LineCatalog catalog(cut, c.truth.index());
    const std::vector<int> hidden{idx(c, 2)};
    const auto ms = observe_all_but(c, hidden);
    const auto subs = substation_children(c.truth);

    const auto code = code_of([&] { learn_with_missing(ms, c.truth.index(), hidden, c.inj, catalog, subs); });
    CHECK((code == ErrorCode::NoConsistentPlacement || code == ErrorCode::IncompleteCover));

    MissingOptions opts;
    opts.partial_on_failure = true;
    const auto res = learn_with_missing(ms, c.truth.index(), hidden, c.inj, catalog, subs, opts);
    CHECK_FALSE(res.forest.has_value());
    REQUIRE(res.failure.has_value());
    CHECK(*res.failure == code);
    CHECK_FALSE(res.failure_message.empty());
    CHECK(structural_error(edge_keys(c.truth), res.edges) > 0.0);
}
