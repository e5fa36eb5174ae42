#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "gridlearn/experiment.hpp"
#include "gridlearn/grid_model.hpp"
#include "oracles.hpp"
#include "random_feeders.hpp"

using namespace gridlearn;
using gridlearn::testing::Builder;

namespace {

// Two trees: 100 -> 1 -> {2, 3 -> 4} and 101 -> 5 -> 6, plus an open tie 2-6.
Network two_trees() {
    Builder b;
    b.substation(100).substation(101);
    for (int id = 1; id <= 6; ++id) b.load(id);
    b.line(100, 1, 0.01, 0.02)
        .line(1, 2, 0.02, 0.01)
        .line(1, 3, 0.03, 0.04)
        .line(3, 4, 0.015, 0.025)
        .line(101, 5, 0.02, 0.03)
        .line(5, 6, 0.01, 0.01)
        .line(2, 6, 0.05, 0.05, LineStatus::open);
    return b.net;
}

int load(const RadialForest& f, std::int64_t id) { return f.index().at(id).index; }

ErrorCode code_of(const Network& net) {
    try {
        build_forest(net);
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("forest orientation follows the substations") {
    const auto f = build_forest(two_trees());
    CHECK(f.num_loads() == 6);
    CHECK(f.num_substations() == 2);
    CHECK(f.parent(load(f, 1)) == NodeRef::substation(0));
    CHECK(f.parent(load(f, 4)) == NodeRef::load(load(f, 3)));
    CHECK(f.parent(load(f, 6)) == NodeRef::load(load(f, 5)));
    CHECK(f.depth(load(f, 4)) == 3);
    CHECK(f.tree(load(f, 6)) == 1);
    CHECK(f.impedance(load(f, 3)).r == doctest::Approx(0.03));
    CHECK(f.path_sum(load(f, 4), Weight::reactance) == doctest::Approx(0.02 + 0.04 + 0.025));
}

TEST_CASE("malformed networks are rejected with the matching code") {
    SUBCASE("unknown endpoint") {
        auto net = two_trees();
        net.lines.push_back({4, 99, 0.1, 0.1, LineStatus::open});
        CHECK(code_of(net) == ErrorCode::UnknownNode);
    }
    SUBCASE("non-positive impedance") {
        auto net = two_trees();
        net.lines[2].x = 0.0;
        CHECK(code_of(net) == ErrorCode::InvalidLine);
    }
    SUBCASE("self loop") {
        auto net = two_trees();
        net.lines.push_back({4, 4, 0.1, 0.1, LineStatus::open});
        CHECK(code_of(net) == ErrorCode::InvalidLine);
    }
    SUBCASE("parallel lines") {
        auto net = two_trees();
        net.lines.push_back({4, 3, 0.1, 0.1, LineStatus::open});
        CHECK(code_of(net) == ErrorCode::ParallelLines);
    }
    SUBCASE("operational loop") {
        auto net = two_trees();
        net.lines.push_back({2, 3, 0.1, 0.1});
        CHECK(code_of(net) == ErrorCode::CycleDetected);
    }
    SUBCASE("two slacks in one tree") {
        auto net = two_trees();
        net.lines.back().status = LineStatus::operational;
        CHECK(code_of(net) == ErrorCode::MultipleSlacksInComponent);
    }
    SUBCASE("load without a slack") {
        auto net = two_trees();
        net.nodes.push_back({7, NodeRole::load});
        CHECK(code_of(net) == ErrorCode::DisconnectedLoadNode);
    }
}

TEST_CASE("from_parents detects cycles") {
    const auto net = two_trees();
    const NodeIndex index(net.nodes);
    std::vector<NodeRef> parents{NodeRef::load(1), NodeRef::load(0), NodeRef::substation(0),
                                 NodeRef::substation(0), NodeRef::substation(1), NodeRef::substation(1)};
    CHECK_THROWS_AS(RadialForest::from_parents(index, parents, std::vector<Impedance>(6)), Error);
}

TEST_CASE("inverse Laplacian entries equal path overlaps") {
    const auto net = two_trees();
    const auto f = build_forest(net);
    for (Weight w : {Weight::resistance, Weight::reactance}) {
        const auto dense = gridlearn::testing::dense_h_inverse(net, f.index(), w);
        for (int a = 0; a < 6; ++a) {
            for (int b = 0; b < 6; ++b) CHECK(h_inverse_entry(f, w, a, b) == doctest::Approx(dense(a, b)).epsilon(1e-12));
        }
    }
    // Across trees the overlap is empty.
    CHECK(h_inverse_entry(f, Weight::resistance, load(f, 4), load(f, 6)) == 0.0);
    // Shared path of 2 and 4 is the single line 100-1.
    CHECK(h_inverse_entry(f, Weight::resistance, load(f, 2), load(f, 4)) == doctest::Approx(0.01));
}

TEST_CASE("inverse Laplacian matches dense inversion on random feeders") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 20; ++i) {
        const auto spec = gridlearn::testing::random_spec(rng, 45, 5, 50);
        const auto sf = synth_feeder(spec, InjectionRanges{}, rng());
        const auto& f = sf.forest;
        for (Weight w : {Weight::resistance, Weight::reactance}) {
            const auto dense = gridlearn::testing::dense_h_inverse(sf.network, f.index(), w);
            const double scale = dense.cwiseAbs().maxCoeff();
            for (int a = 0; a < f.num_loads(); ++a) {
                for (int b = 0; b < f.num_loads(); ++b) {
                    REQUIRE(std::abs(h_inverse_entry(f, w, a, b) - dense(a, b)) <= 1e-10 * scale);
                }
            }
            // reduced_laplacian builds the same matrix as the line-by-line oracle.
            CHECK((reduced_laplacian(f, w) - gridlearn::testing::laplacian_from_lines(sf.network, f.index(), w))
                      .cwiseAbs()
                      .maxCoeff() <= 1e-9 * reduced_laplacian(f, w).cwiseAbs().maxCoeff());
        }
    }
}

TEST_CASE("difference along a parent edge isolates the edge weight") {
    const auto f = build_forest(two_trees());
    const int a = load(f, 3);
    const NodeRef b = f.parent(a);
    for (int c = 0; c < 6; ++c) {
        const double want = (c == a || c == load(f, 4)) ? 0.03 : 0.0;
        CHECK(h_inverse_diff(f, Weight::resistance, a, b, c) == doctest::Approx(want));
    }
    CHECK_THROWS_AS(h_inverse_diff(f, Weight::resistance, a, NodeRef::load(load(f, 2)), 0), Error);
}

TEST_CASE("descendant sets and ancestors") {
    const auto f = build_forest(two_trees());
    auto d = descendant_set(f, load(f, 1));
    std::sort(d.begin(), d.end());
    CHECK(d == std::vector<int>{load(f, 1), load(f, 2), load(f, 3), load(f, 4)});
    CHECK(descendant_set(f, load(f, 4)) == std::vector<int>{load(f, 4)});
    CHECK(f.is_descendant(load(f, 4), load(f, 1)));
    CHECK_FALSE(f.is_descendant(load(f, 1), load(f, 4)));
    CHECK(f.common_ancestor(load(f, 2), load(f, 4)) == load(f, 1));
    CHECK_FALSE(f.common_ancestor(load(f, 2), load(f, 6)).has_value());
}

TEST_CASE("path_apply equals the dense product") {
    const auto net = two_trees();
    const auto f = build_forest(net);
    Eigen::VectorXd v(6);
    v << 0.3, -1.2, 0.7, 2.0, 0.1, -0.4;
    for (Weight w : {Weight::resistance, Weight::reactance}) {
        const Eigen::VectorXd want = gridlearn::testing::dense_h_inverse(net, f.index(), w) * v;
        const Eigen::VectorXd got = path_apply(f, w, v);
        CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("incidence matrix reproduces the Laplacian") {
    const auto net = two_trees();
    const auto f = build_forest(net);
    const auto m = incidence_matrix(f);
    Eigen::VectorXd g(6);
    for (int a = 0; a < 6; ++a) g(a) = 1.0 / f.impedance(a).r;
    const Eigen::MatrixXd l = m.transpose() * g.asDiagonal() * m;
    CHECK((l - gridlearn::testing::laplacian_from_lines(net, f.index(), Weight::resistance)).cwiseAbs().maxCoeff() <
          1e-9);
}

TEST_CASE("structural error counts missed true edges") {
    const auto f = build_forest(two_trees());
    CHECK(structural_error(f, f) == 0.0);
    auto keys = edge_keys(f);
    auto wrong = keys;
    wrong[0] = edge_key(NodeRef::load(load(f, 2)), NodeRef::load(load(f, 6)));
    CHECK(structural_error(keys, wrong) == doctest::Approx(1.0 / 6.0));
    CHECK(structural_error(keys, std::vector<EdgeKey>{}) == 1.0);
    CHECK(edge_key(NodeRef::load(1), NodeRef::substation(0)) == edge_key(NodeRef::substation(0), NodeRef::load(1)));
}

TEST_CASE("substation and load indices live in separate ranges") {
    const auto f = build_forest(two_trees());
    CHECK(f.index().id_of(NodeRef::substation(1)) == 101);
    CHECK(f.index().id_of(NodeRef::load(0)) == 1);
    CHECK(NodeRef::substation(0).key() != NodeRef::load(0).key());
    const auto subs = substation_children(f);
    REQUIRE(subs.size() == 2);
    CHECK(subs[0] == std::vector<int>{load(f, 1)});
    CHECK(subs[1] == std::vector<int>{load(f, 5)});
}

TEST_CASE("line catalog finds open and operational lines either way round") {
    const auto net = two_trees();
    const auto f = build_forest(net);
    const LineCatalog cat(net, f.index());
    CHECK(cat.size() == 7);
    const auto tie = cat.find(NodeRef::load(load(f, 6)), NodeRef::load(load(f, 2)));
    REQUIRE(tie.has_value());
    CHECK(tie->r == doctest::Approx(0.05));
    CHECK(cat.find(NodeRef::substation(0), NodeRef::load(load(f, 1))).has_value());
    CHECK_FALSE(cat.find(NodeRef::load(load(f, 4)), NodeRef::load(load(f, 6))).has_value());
}
