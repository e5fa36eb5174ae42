#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gridlearn/grid_model.hpp"
#include "gridlearn/lcpf.hpp"

namespace gridlearn {

enum class Precompute { automatic, always, never };

struct MomentOptions {
    /// `automatic` builds full covariance matrices when at most
    /// `precompute_limit` nodes are observed; otherwise pairwise statistics
    /// are computed on demand and memoized.
    Precompute precompute = Precompute::automatic;
    int precompute_limit = 200;
};

/// Voltage statistics over a set of observed load nodes, either estimated
/// from samples (divisor m, biased) or taken from exact analytic moments.
///
/// Copies share one immutable core; the on-demand cache is guarded by a mutex
/// so concurrent readers are safe.
class MomentSet {
public:
    static MomentSet from_samples(const VoltageSamples& samples, std::span<const int> observed,
                                  const MomentOptions& options = {});
    /// Every load observed.
    static MomentSet from_samples(const VoltageSamples& samples, const MomentOptions& options = {});

    static MomentSet from_analytic(const AnalyticMoments& moments, std::span<const int> observed);
    static MomentSet from_analytic(const AnalyticMoments& moments);

    int num_loads() const;
    bool is_observed(int a) const;
    const std::vector<int>& observed() const;
    bool has_phase() const;
    /// Sample count, or nullopt for analytic (population) moments.
    std::optional<int> sample_count() const;

    /// Channel::eps or Channel::theta.
    double mean(Channel channel, int a) const;
    /// Omega(a, a) for eps/theta; Cov(eps_a, theta_a) for cross.
    double variance(Channel channel, int a) const;
    /// Cov(eps_a, eps_b), Cov(theta_a, theta_b), or Cov(eps_a, theta_b) for cross.
    double covariance(Channel channel, int a, int b) const;

    /// Centered squared difference of nodes a and b (cross: product of the
    /// eps and theta centered differences). Symmetric, zero on the diagonal.
    double sqdiff(Channel channel, int a, int b) const;
    /// Same, where `b` may be a substation (zero-deviation reference).
    double sqdiff(Channel channel, int a, NodeRef b) const;

    /// Drops the phase channel; structure learning must not notice.
    MomentSet without_phase() const;

private:
    struct Core;
    explicit MomentSet(std::shared_ptr<const Core> core) : core_(std::move(core)) {}
    int column(int a) const;

    std::shared_ptr<const Core> core_;
};

}  // namespace gridlearn
