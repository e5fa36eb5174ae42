#include "gridlearn/moments.hpp"

#include <mutex>
#include <numeric>
#include <string>
#include <unordered_map>

namespace gridlearn {

struct MomentSet::Core {
    int n_loads = 0;
    std::vector<int> observed;
    std::vector<int> column_of;  // -1 for hidden loads
    bool has_phase = false;
    std::optional<int> samples;

    Eigen::VectorXd mean_eps;
    Eigen::VectorXd mean_theta;

    // Full covariance matrices over observed columns (analytic or precomputed).
    bool full = false;
    Eigen::MatrixXd cov_ee;
    Eigen::MatrixXd cov_tt;
    Eigen::MatrixXd cov_et;  // (i, j) = Cov(eps_i, theta_j)

    // Centered samples, kept for on-demand statistics.
    Eigen::MatrixXd dev_eps;
    Eigen::MatrixXd dev_theta;

    mutable std::mutex mutex;
    mutable std::unordered_map<std::uint64_t, double> cache;
};

namespace {

enum class Stat : std::uint64_t { sq_eps, sq_theta, sq_cross, cov_ee, cov_tt, cov_et };

std::uint64_t cache_key(Stat s, int i, int j) {
    return (static_cast<std::uint64_t>(s) << 56) | (static_cast<std::uint64_t>(i) << 28) |
           static_cast<std::uint64_t>(j);
}

std::vector<int> all_loads(int n) {
    std::vector<int> v(static_cast<std::size_t>(n));
    std::iota(v.begin(), v.end(), 0);
    return v;
}

}  // namespace

MomentSet MomentSet::from_samples(const VoltageSamples& samples, const MomentOptions& options) {
    const auto all = all_loads(samples.num_loads());
    return from_samples(samples, all, options);
}

MomentSet MomentSet::from_samples(const VoltageSamples& samples, std::span<const int> observed,
                                  const MomentOptions& options) {
    const int m = samples.count();
    if (m < 2) throw Error(ErrorCode::TooFewSamples, "need at least 2 samples, got " + std::to_string(m));
    if (samples.has_phase() && (samples.theta.rows() != m || samples.theta.cols() != samples.num_loads())) {
        throw Error(ErrorCode::DimensionMismatch, "eps and theta sample matrices differ in shape");
    }
    auto core = std::make_shared<Core>();
    core->n_loads = samples.num_loads();
    core->observed.assign(observed.begin(), observed.end());
    core->column_of.assign(static_cast<std::size_t>(core->n_loads), -1);
    core->has_phase = samples.has_phase();
    core->samples = m;

    const auto cols = static_cast<Eigen::Index>(core->observed.size());
    core->dev_eps.resize(m, cols);
    if (core->has_phase) core->dev_theta.resize(m, cols);
    for (Eigen::Index i = 0; i < cols; ++i) {
        const int a = core->observed[static_cast<std::size_t>(i)];
        if (a < 0 || a >= core->n_loads) throw Error(ErrorCode::UnknownNode, "observed load out of range");
        if (core->column_of[static_cast<std::size_t>(a)] >= 0) {
            throw Error(ErrorCode::InvalidArgument, "observed set lists load " + std::to_string(a) + " twice");
        }
        core->column_of[static_cast<std::size_t>(a)] = static_cast<int>(i);
        core->dev_eps.col(i) = samples.eps.col(a);
        if (core->has_phase) core->dev_theta.col(i) = samples.theta.col(a);
    }
    // Means with divisor m; deviations are stored centered.
    core->mean_eps = core->dev_eps.colwise().mean().transpose();
    core->dev_eps.rowwise() -= core->mean_eps.transpose();
    if (core->has_phase) {
        core->mean_theta = core->dev_theta.colwise().mean().transpose();
        core->dev_theta.rowwise() -= core->mean_theta.transpose();
    }

    const bool precompute = options.precompute == Precompute::always ||
                            (options.precompute == Precompute::automatic && cols <= options.precompute_limit);
    if (precompute) {
        const double inv_m = 1.0 / static_cast<double>(m);
        core->full = true;
        core->cov_ee = (core->dev_eps.transpose() * core->dev_eps) * inv_m;
        if (core->has_phase) {
            core->cov_tt = (core->dev_theta.transpose() * core->dev_theta) * inv_m;
            core->cov_et = (core->dev_eps.transpose() * core->dev_theta) * inv_m;
        }
    }
    return MomentSet(std::move(core));
}

MomentSet MomentSet::from_analytic(const AnalyticMoments& moments) {
    const auto all = all_loads(static_cast<int>(moments.mu_eps.size()));
    return from_analytic(moments, all);
}

MomentSet MomentSet::from_analytic(const AnalyticMoments& moments, std::span<const int> observed) {
    auto core = std::make_shared<Core>();
    core->n_loads = static_cast<int>(moments.mu_eps.size());
    core->observed.assign(observed.begin(), observed.end());
    core->column_of.assign(static_cast<std::size_t>(core->n_loads), -1);
    core->has_phase = moments.omega_theta.size() > 0;
    core->full = true;

    const auto cols = static_cast<Eigen::Index>(core->observed.size());
    Eigen::VectorXi idx(cols);
    for (Eigen::Index i = 0; i < cols; ++i) {
        const int a = core->observed[static_cast<std::size_t>(i)];
        if (a < 0 || a >= core->n_loads) throw Error(ErrorCode::UnknownNode, "observed load out of range");
        if (core->column_of[static_cast<std::size_t>(a)] >= 0) {
            throw Error(ErrorCode::InvalidArgument, "observed set lists load " + std::to_string(a) + " twice");
        }
        core->column_of[static_cast<std::size_t>(a)] = static_cast<int>(i);
        idx(i) = a;
    }
    core->mean_eps = moments.mu_eps(idx);
    core->cov_ee = moments.omega_eps(idx, idx);
    if (core->has_phase) {
        core->mean_theta = moments.mu_theta(idx);
        core->cov_tt = moments.omega_theta(idx, idx);
        core->cov_et = moments.omega_eps_theta(idx, idx);
    }
    return MomentSet(std::move(core));
}

int MomentSet::num_loads() const { return core_->n_loads; }

bool MomentSet::is_observed(int a) const {
    return a >= 0 && a < core_->n_loads && core_->column_of[static_cast<std::size_t>(a)] >= 0;
}

const std::vector<int>& MomentSet::observed() const { return core_->observed; }
bool MomentSet::has_phase() const { return core_->has_phase; }
std::optional<int> MomentSet::sample_count() const { return core_->samples; }

int MomentSet::column(int a) const {
    if (a < 0 || a >= core_->n_loads) throw Error(ErrorCode::UnknownNode, "load " + std::to_string(a));
    const int c = core_->column_of[static_cast<std::size_t>(a)];
    if (c < 0) throw Error(ErrorCode::UnobservedNode, "no voltage data for load " + std::to_string(a));
    return c;
}

double MomentSet::mean(Channel channel, int a) const {
    const int i = column(a);
    if (channel == Channel::eps) return core_->mean_eps(i);
    if (!core_->has_phase) throw Error(ErrorCode::MissingPhaseData, "phase channel not available");
    if (channel == Channel::theta) return core_->mean_theta(i);
    throw Error(ErrorCode::InvalidArgument, "the cross channel has no mean");
}

double MomentSet::variance(Channel channel, int a) const { return covariance(channel, a, a); }

double MomentSet::covariance(Channel channel, int a, int b) const {
    int i = column(a);
    int j = column(b);
    if (channel != Channel::eps && !core_->has_phase) {
        throw Error(ErrorCode::MissingPhaseData, "phase channel not available");
    }
    const auto& c = *core_;
    if (c.full) {
        switch (channel) {
            case Channel::eps: return c.cov_ee(i, j);
            case Channel::theta: return c.cov_tt(i, j);
            case Channel::cross: return c.cov_et(i, j);
        }
    }
    Stat stat = channel == Channel::eps ? Stat::cov_ee : channel == Channel::theta ? Stat::cov_tt : Stat::cov_et;
    if (channel != Channel::cross && i > j) std::swap(i, j);
    const auto key = cache_key(stat, i, j);
    {
        std::lock_guard lock(c.mutex);
        if (auto it = c.cache.find(key); it != c.cache.end()) return it->second;
    }
    const auto& left = channel == Channel::theta ? c.dev_theta : c.dev_eps;
    const auto& right = channel == Channel::eps ? c.dev_eps : c.dev_theta;
    const double value = left.col(i).dot(right.col(j)) / static_cast<double>(c.dev_eps.rows());
    std::lock_guard lock(c.mutex);
    c.cache.emplace(key, value);
    return value;
}

double MomentSet::sqdiff(Channel channel, int a, int b) const {
    if (a == b) {
        column(a);
        return 0.0;
    }
    int i = column(a);
    int j = column(b);
    if (channel != Channel::eps && !core_->has_phase) {
        throw Error(ErrorCode::MissingPhaseData, "phase channel not available");
    }
    const auto& c = *core_;
    if (c.full) {
        switch (channel) {
            case Channel::eps: return c.cov_ee(i, i) - 2.0 * c.cov_ee(i, j) + c.cov_ee(j, j);
            case Channel::theta: return c.cov_tt(i, i) - 2.0 * c.cov_tt(i, j) + c.cov_tt(j, j);
            case Channel::cross: return c.cov_et(i, i) - c.cov_et(i, j) - c.cov_et(j, i) + c.cov_et(j, j);
        }
    }
    if (i > j) std::swap(i, j);
    const Stat stat = channel == Channel::eps     ? Stat::sq_eps
                      : channel == Channel::theta ? Stat::sq_theta
                                                  : Stat::sq_cross;
    const auto key = cache_key(stat, i, j);
    {
        std::lock_guard lock(c.mutex);
        if (auto it = c.cache.find(key); it != c.cache.end()) return it->second;
    }
    // Sum_j [(x_a - mu_a) - (x_b - mu_b)]^2 / m, straight from the samples.
    double value = 0.0;
    switch (channel) {
        case Channel::eps: value = (c.dev_eps.col(i) - c.dev_eps.col(j)).squaredNorm(); break;
        case Channel::theta: value = (c.dev_theta.col(i) - c.dev_theta.col(j)).squaredNorm(); break;
        case Channel::cross:
            value = (c.dev_eps.col(i) - c.dev_eps.col(j)).dot(c.dev_theta.col(i) - c.dev_theta.col(j));
            break;
    }
    value /= static_cast<double>(c.dev_eps.rows());
    std::lock_guard lock(c.mutex);
    c.cache.emplace(key, value);
    return value;
}

double MomentSet::sqdiff(Channel channel, int a, NodeRef b) const {
    if (b.is_load()) return sqdiff(channel, a, b.index);
    return variance(channel, a);
}

MomentSet MomentSet::without_phase() const {
    auto core = std::make_shared<Core>();
    const auto& c = *core_;
    core->n_loads = c.n_loads;
    core->observed = c.observed;
    core->column_of = c.column_of;
    core->has_phase = false;
    core->samples = c.samples;
    core->mean_eps = c.mean_eps;
    core->full = c.full;
    core->cov_ee = c.cov_ee;
    core->dev_eps = c.dev_eps;
    return MomentSet(std::move(core));
}

}  // namespace gridlearn
