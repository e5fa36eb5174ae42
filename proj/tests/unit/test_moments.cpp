#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gridlearn/moments.hpp"
#include "oracles.hpp"

using namespace gridlearn;

namespace {

// Three samples on two loads, small enough to do by hand.
VoltageSamples hand_samples() {
    VoltageSamples s;
    s.eps.resize(3, 2);
    s.theta.resize(3, 2);
    s.eps << 1.0, 2.0,
             2.0, 4.0,
             3.0, 3.0;
    s.theta << 0.0, 1.0,
               1.0, 1.0,
               2.0, 4.0;
    return s;
}

ErrorCode code_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("sample statistics match hand computation") {
    // eps0 = {1,2,3}: mean 2, var 2/3.  eps1 = {2,4,3}: mean 3, var 2/3.  cov = 1/3.
    // theta0 = {0,1,2}: mean 1.  theta1 = {1,1,4}: mean 2, var 2.
    for (Precompute mode : {Precompute::always, Precompute::never}) {
        const auto ms = MomentSet::from_samples(hand_samples(), {.precompute = mode});
        CHECK(ms.sample_count() == 3);
        CHECK(ms.mean(Channel::eps, 1) == doctest::Approx(3.0));
        CHECK(ms.mean(Channel::theta, 1) == doctest::Approx(2.0));
        CHECK(ms.variance(Channel::eps, 0) == doctest::Approx(2.0 / 3.0));
        CHECK(ms.covariance(Channel::eps, 0, 1) == doctest::Approx(1.0 / 3.0));
        CHECK(ms.variance(Channel::theta, 1) == doctest::Approx(2.0));
        // Cov(eps0, theta1): deviations (-1,0,1) and (-1,-1,2) -> 3/3.
        CHECK(ms.covariance(Channel::cross, 0, 1) == doctest::Approx(1.0));
        // Cov(eps0, theta0) = (1 + 0 + 1) / 3.
        CHECK(ms.variance(Channel::cross, 0) == doctest::Approx(2.0 / 3.0));
        // eps0 - eps1 = {-1,-2,0}: centered {0,-1,1} -> 2/3.
        CHECK(ms.sqdiff(Channel::eps, 0, 1) == doctest::Approx(2.0 / 3.0));
        CHECK(ms.sqdiff(Channel::eps, 1, 0) == doctest::Approx(2.0 / 3.0));
        CHECK(ms.sqdiff(Channel::eps, 1, 1) == 0.0);
        // theta0 - theta1 = {-1,0,-2}: centered {0,1,-1}; times eps diff {0,-1,1} -> -2/3.
        CHECK(ms.sqdiff(Channel::cross, 0, 1) == doctest::Approx(-2.0 / 3.0));
        CHECK(ms.sqdiff(Channel::eps, 0, NodeRef::substation(0)) == doctest::Approx(2.0 / 3.0));
    }
}

TEST_CASE("lazy and precomputed statistics agree on random data") {
    const int n = 30;
    VoltageSamples s;
    s.eps = Eigen::MatrixXd::Random(500, n);
    s.theta = Eigen::MatrixXd::Random(500, n);
    const auto full = MomentSet::from_samples(s, {.precompute = Precompute::always});
    const auto lazy = MomentSet::from_samples(s, {.precompute = Precompute::never});
    for (int a = 0; a < n; a += 3) {
        for (int b = 0; b < n; b += 4) {
            for (Channel ch : {Channel::eps, Channel::theta, Channel::cross}) {
                CHECK(full.sqdiff(ch, a, b) == doctest::Approx(lazy.sqdiff(ch, a, b)).epsilon(1e-12));
                CHECK(full.covariance(ch, a, b) == doctest::Approx(lazy.covariance(ch, a, b)).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("analytic moment sets use the population matrices") {
    gridlearn::testing::Builder b;
    b.substation(100).load(1).load(2).load(3);
    b.line(100, 1, 0.01, 0.02).line(1, 2, 0.03, 0.01).line(1, 3, 0.02, 0.02);
    const auto f = build_forest(b.net);
    const auto am = analytic_moments(f, gridlearn::testing::simple_injections(3));
    const auto ms = MomentSet::from_analytic(am);
    CHECK_FALSE(ms.sample_count().has_value());
    CHECK(ms.variance(Channel::eps, 2) == doctest::Approx(am.omega_eps(2, 2)));
    CHECK(ms.sqdiff(Channel::theta, 1, 2) ==
          doctest::Approx(am.omega_theta(1, 1) + am.omega_theta(2, 2) - 2 * am.omega_theta(1, 2)));
    CHECK(ms.sqdiff(Channel::cross, 1, NodeRef::substation(0)) == doctest::Approx(am.omega_eps_theta(1, 1)));
}

TEST_CASE("constant columns have zero variance and zero differences") {
    VoltageSamples s;
    s.eps = Eigen::MatrixXd::Constant(10, 2, 0.5);
    s.theta = Eigen::MatrixXd::Constant(10, 2, -1.0);
    const auto ms = MomentSet::from_samples(s);
    CHECK(ms.variance(Channel::eps, 0) == 0.0);
    CHECK(ms.sqdiff(Channel::eps, 0, 1) == 0.0);
    CHECK(ms.sqdiff(Channel::cross, 0, 1) == 0.0);
}

TEST_CASE("observed subsets, phase removal and errors") {
    const std::vector<int> observed{1};
    const auto ms = MomentSet::from_samples(hand_samples(), observed);
    CHECK(ms.num_loads() == 2);
    CHECK(ms.is_observed(1));
    CHECK_FALSE(ms.is_observed(0));
    CHECK(ms.mean(Channel::eps, 1) == doctest::Approx(3.0));
    CHECK(code_of([&] { (void)ms.mean(Channel::eps, 0); }) == ErrorCode::UnobservedNode);
    CHECK(code_of([&] { (void)ms.sqdiff(Channel::eps, 0, 1); }) == ErrorCode::UnobservedNode);

    const auto no_phase = MomentSet::from_samples(hand_samples()).without_phase();
    CHECK_FALSE(no_phase.has_phase());
    CHECK(no_phase.sqdiff(Channel::eps, 0, 1) == doctest::Approx(2.0 / 3.0));
    CHECK(code_of([&] { (void)no_phase.sqdiff(Channel::theta, 0, 1); }) == ErrorCode::MissingPhaseData);
    CHECK(code_of([&] { (void)no_phase.variance(Channel::cross, 0); }) == ErrorCode::MissingPhaseData);

    VoltageSamples one;
    one.eps = Eigen::MatrixXd::Zero(1, 2);
    CHECK(code_of([&] { MomentSet::from_samples(one); }) == ErrorCode::TooFewSamples);

    const std::vector<int> twice{0, 0};
    CHECK(code_of([&] { MomentSet::from_samples(hand_samples(), twice); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("sample variance uses the biased divisor") {
    VoltageSamples s;
    s.eps.resize(2, 1);
    s.eps << 0.0, 2.0;
    const auto ms = MomentSet::from_samples(s);
    CHECK_FALSE(ms.has_phase());
    CHECK(ms.variance(Channel::eps, 0) == doctest::Approx(1.0));
}
