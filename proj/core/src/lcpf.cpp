#include "gridlearn/lcpf.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace gridlearn {

namespace {

// Row-wise version of path_apply: rows are loads, columns are samples.
Eigen::MatrixXd path_apply_block(const RadialForest& forest, Weight w, Eigen::MatrixXd subtree) {
    const auto order = forest.preorder();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const NodeRef p = forest.parent(*it);
        if (p.is_load()) subtree.row(p.index) += subtree.row(*it);
    }
    Eigen::MatrixXd out(subtree.rows(), subtree.cols());
    for (int a : order) {
        const NodeRef p = forest.parent(a);
        const double wa = forest.edge_weight(a, w);
        if (p.is_load()) {
            out.row(a) = out.row(p.index) + wa * subtree.row(a);
        } else {
            out.row(a) = wa * subtree.row(a);
        }
    }
    return out;
}

void require_impedances(const RadialForest& forest) {
    if (!forest.has_impedances()) {
        throw Error(ErrorCode::MissingImpedance, "forest has lines with unknown impedance");
    }
}

}  // namespace

InjectionModel InjectionModel::zeros(int n) {
    InjectionModel m;
    m.mu_p = Eigen::VectorXd::Zero(n);
    m.mu_q = Eigen::VectorXd::Zero(n);
    m.var_p = Eigen::VectorXd::Zero(n);
    m.var_q = Eigen::VectorXd::Zero(n);
    m.cov_pq = Eigen::VectorXd::Zero(n);
    return m;
}

void check_cauchy_schwarz(const InjectionModel& inj) {
    const auto n = inj.mu_p.size();
    if (inj.mu_q.size() != n || inj.var_p.size() != n || inj.var_q.size() != n || inj.cov_pq.size() != n) {
        throw Error(ErrorCode::DimensionMismatch, "injection model vectors have different lengths");
    }
    for (Eigen::Index a = 0; a < n; ++a) {
        const double vp = inj.var_p(a);
        const double vq = inj.var_q(a);
        const double c = inj.cov_pq(a);
        if (!(vp >= 0.0) || !(vq >= 0.0)) {
            throw Error(ErrorCode::InvalidCovariance, "negative variance at load " + std::to_string(a));
        }
        // Small slack so exactly-correlated inputs survive rounding.
        if (c * c > vp * vq * (1.0 + 1e-12)) {
            throw Error(ErrorCode::InvalidCovariance, "cov_pq exceeds sqrt(var_p var_q) at load " + std::to_string(a));
        }
    }
}

void check_uncorrelated_loads(const InjectionModel& inj) {
    check_cauchy_schwarz(inj);
    for (Eigen::Index a = 0; a < inj.mu_p.size(); ++a) {
        if (!(inj.var_p(a) > 0.0) || !(inj.var_q(a) > 0.0) || !(inj.cov_pq(a) > 0.0)) {
            throw Error(ErrorCode::AssumptionViolated,
                        "load " + std::to_string(a) + " needs var_p, var_q, cov_pq > 0");
        }
    }
}

LcpfSolution solve_lcpf(const RadialForest& forest, const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
    if (p.size() != forest.num_loads() || q.size() != forest.num_loads()) {
        throw Error(ErrorCode::DimensionMismatch, "injection vectors must have one entry per load");
    }
    require_impedances(forest);
    const Eigen::VectorXd rp = path_apply(forest, Weight::resistance, p);
    const Eigen::VectorXd xp = path_apply(forest, Weight::reactance, p);
    const Eigen::VectorXd rq = path_apply(forest, Weight::resistance, q);
    const Eigen::VectorXd xq = path_apply(forest, Weight::reactance, q);
    return {xp - rq, rp + xq};
}

Eigen::MatrixXd h_inverse_matrix(const RadialForest& forest, Weight w) {
    require_impedances(forest);
    const int n = forest.num_loads();
    return path_apply_block(forest, w, Eigen::MatrixXd::Identity(n, n));
}

AnalyticMoments analytic_moments(const RadialForest& forest, const InjectionModel& inj) {
    if (inj.size() != forest.num_loads()) {
        throw Error(ErrorCode::DimensionMismatch, "injection model size differs from load count");
    }
    const Eigen::MatrixXd hr = h_inverse_matrix(forest, Weight::resistance);
    const Eigen::MatrixXd hx = h_inverse_matrix(forest, Weight::reactance);
    // left * diag(d) * right without forming the diagonal matrix.
    auto sandwich = [](const Eigen::MatrixXd& left, const Eigen::VectorXd& d, const Eigen::MatrixXd& right) {
        return Eigen::MatrixXd(left * d.asDiagonal() * right);
    };
    const auto& p = inj.var_p;
    const auto& q = inj.var_q;
    const auto& pq = inj.cov_pq;

    AnalyticMoments m;
    m.mu_theta = hx * inj.mu_p - hr * inj.mu_q;
    m.mu_eps = hr * inj.mu_p + hx * inj.mu_q;
    m.omega_theta = sandwich(hx, p, hx) + sandwich(hr, q, hr) - sandwich(hx, pq, hr) - sandwich(hr, pq, hx);
    m.omega_eps = sandwich(hr, p, hr) + sandwich(hx, q, hx) + sandwich(hr, pq, hx) + sandwich(hx, pq, hr);
    m.omega_theta_eps = sandwich(hx, p, hr) - sandwich(hr, q, hx) + sandwich(hx, pq, hx) - sandwich(hr, pq, hr);
    m.omega_eps_theta = sandwich(hr, p, hx) - sandwich(hx, q, hr) + sandwich(hx, pq, hx) - sandwich(hr, pq, hr);
    return m;
}

VoltageSamples sample_voltages(const RadialForest& forest, const InjectionModel& inj, int m, std::uint64_t seed,
                               const SamplerOptions& options) {
    if (m < 1) throw Error(ErrorCode::InvalidArgument, "sample count must be at least 1");
    if (inj.size() != forest.num_loads()) {
        throw Error(ErrorCode::DimensionMismatch, "injection model size differs from load count");
    }
    check_cauchy_schwarz(inj);
    require_impedances(forest);

    const int n = forest.num_loads();
    // 2x2 Cholesky factor of [[var_p, cov_pq], [cov_pq, var_q]] per node.
    Eigen::VectorXd l11(n), l21(n), l22(n);
    for (int a = 0; a < n; ++a) {
        l11(a) = std::sqrt(inj.var_p(a));
        l21(a) = l11(a) > 0.0 ? inj.cov_pq(a) / l11(a) : 0.0;
        l22(a) = std::sqrt(std::max(0.0, inj.var_q(a) - l21(a) * l21(a)));
    }

    VoltageSamples out;
    out.eps.resize(m, n);
    out.theta.resize(m, n);

    const int chunk = std::max(1, options.chunk_size);
    const int n_chunks = (m + chunk - 1) / chunk;
    auto run_chunk = [&](int c) {
        const int begin = c * chunk;
        const int len = std::min(chunk, m - begin);
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(c), 0x9e3779b9u};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> normal;
        std::uniform_real_distribution<double> uniform(-std::sqrt(3.0), std::sqrt(3.0));
        auto draw = [&]() {
            return inj.distribution == InjectionDistribution::gaussian ? normal(rng) : uniform(rng);
        };

        Eigen::MatrixXd p(n, len), q(n, len);
        for (int j = 0; j < len; ++j) {
            for (int a = 0; a < n; ++a) {
                const double z1 = draw();
                const double z2 = draw();
                p(a, j) = inj.mu_p(a) + l11(a) * z1;
                q(a, j) = inj.mu_q(a) + l21(a) * z1 + l22(a) * z2;
            }
        }
        const Eigen::MatrixXd rp = path_apply_block(forest, Weight::resistance, p);
        const Eigen::MatrixXd xp = path_apply_block(forest, Weight::reactance, p);
        const Eigen::MatrixXd rq = path_apply_block(forest, Weight::resistance, q);
        const Eigen::MatrixXd xq = path_apply_block(forest, Weight::reactance, q);
        out.theta.middleRows(begin, len) = (xp - rq).transpose();
        out.eps.middleRows(begin, len) = (rp + xq).transpose();
    };

    int threads = options.threads > 0 ? options.threads : static_cast<int>(std::thread::hardware_concurrency());
    threads = std::clamp(threads, 1, n_chunks);
    if (threads == 1) {
        for (int c = 0; c < n_chunks; ++c) run_chunk(c);
        return out;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (int c = next++; c < n_chunks; c = next++) run_chunk(c);
        });
    }
    for (auto& th : pool) th.join();
    return out;
}

double pairwise_sqdiff_analytic(const RadialForest& forest, const InjectionModel& inj, int a, int b,
                                Channel channel) {
    if (a == b) throw Error(ErrorCode::InvalidArgument, "pairwise statistic needs distinct nodes");
    if (forest.tree(a) != forest.tree(b)) {
        throw Error(ErrorCode::DifferentTrees, "nodes " + std::to_string(a) + " and " + std::to_string(b));
    }
    require_impedances(forest);
    const int tree = forest.tree(a);
    double total = 0.0;
    for (int c = 0; c < forest.num_loads(); ++c) {
        if (forest.tree(c) != tree) continue;
        const double dr = h_inverse_entry(forest, Weight::resistance, a, c) -
                          h_inverse_entry(forest, Weight::resistance, b, c);
        const double dx = h_inverse_entry(forest, Weight::reactance, a, c) -
                          h_inverse_entry(forest, Weight::reactance, b, c);
        const double vp = inj.var_p(c);
        const double vq = inj.var_q(c);
        const double cpq = inj.cov_pq(c);
        switch (channel) {
            case Channel::eps: total += dr * dr * vp + dx * dx * vq + 2.0 * dr * dx * cpq; break;
            case Channel::theta: total += dx * dx * vp + dr * dr * vq - 2.0 * dr * dx * cpq; break;
            case Channel::cross: total += dr * dx * (vp - vq) + (dx * dx - dr * dr) * cpq; break;
        }
    }
    return total;
}

SubtreeSums subtree_sums(const RadialForest& forest, const InjectionModel& inj, int a) {
    SubtreeSums s;
    for (int c : descendant_set(forest, a)) {
        s.p += inj.var_p(c);
        s.q += inj.var_q(c);
        s.pq += inj.cov_pq(c);
    }
    return s;
}

EdgeStatistics predict_edge_statistics(double r, double x, const SubtreeSums& s) {
    return {r * r * s.p + x * x * s.q + 2.0 * r * x * s.pq,  //
            x * x * s.p + r * r * s.q - 2.0 * r * x * s.pq,  //
            r * x * (s.p - s.q) + (x * x - r * r) * s.pq};
}

double parent_sqdiff_closed_form(const RadialForest& forest, const InjectionModel& inj, int a, Channel channel) {
    require_impedances(forest);
    const auto& z = forest.impedance(a);
    const auto stats = predict_edge_statistics(z.r, z.x, subtree_sums(forest, inj, a));
    switch (channel) {
        case Channel::eps: return stats.eps;
        case Channel::theta: return stats.theta;
        case Channel::cross: return stats.cross;
    }
    return 0.0;
}

}  // namespace gridlearn
