#pragma once

#include <atomic>
#include <cstdlib>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "nmqsd/core.hpp"
#include "nmqsd/hilbert.hpp"

namespace nmqsd {

enum class EstimatorKind { RawLinear, NormalizedNonlinear };

inline const char* estimator_name(EstimatorKind k) {
    return k == EstimatorKind::RawLinear ? "raw_linear" : "normalized_nonlinear";
}

struct EnsembleConfig {
    Eigen::Index n_paths = 1;
    double dt = 1e-3;
    double T = 1.0;
    std::uint64_t global_seed = 0;
    EstimatorKind estimator = EstimatorKind::NormalizedNonlinear;
    Eigen::Index snapshot_stride = 10;
    std::vector<std::string> observable_names;
    std::vector<ComplexMatrix> observables;
    int n_threads = 0;  // 0: NMQSD_THREADS env var, else hardware concurrency

    Eigen::Index n_steps() const {
        const double steps = T / dt;
        const auto n = static_cast<Eigen::Index>(std::llround(steps));
        if (n < 1 || std::abs(steps - double(n)) > 1e-9)
            throw ConfigError("EnsembleConfig: T/dt must be a positive integer");
        return n;
    }
};

struct EnsembleResult {
    RealVector times;                          // snapshot times
    std::vector<Eigen::Index> snapshot_steps;  // step index of each snapshot
    std::vector<ComplexMatrix> mean_density;   // hermitized projector average
    std::vector<RealMatrix> density_var;       // per-entry sample variance
    ComplexMatrix observable_means;            // (n_obs, n_snapshots)
    RealMatrix observable_se;                  // (n_obs, n_snapshots)
    RealVector trace_mean;                     // mean of Tr(sample) = ||psi||^2
    RealVector trace_se;
    std::vector<double> path_stats;  // one entry per path when the model defines a statistic
    Eigen::Index n_paths = 0;
    EstimatorKind estimator = EstimatorKind::NormalizedNonlinear;

    Eigen::Index n_snapshots() const { return times.size(); }

    // Frobenius-norm standard error of the mean density at a snapshot:
    // sqrt(sum_ij Var[rho_ij] / N). Trace-distance acceptance bands are
    // expressed through this (for 2x2 traceless differences the trace
    // distance is ||.||_F / sqrt(2)).
    double density_se_frobenius(Eigen::Index snap) const {
        return std::sqrt(density_var[size_t(snap)].sum() / double(n_paths));
    }
};

// Average of projectors, hermitized to scrub accumulation roundoff.
inline ComplexMatrix mean_density(const std::vector<ComplexVector>& states, EstimatorKind est) {
    if (states.empty()) throw EmptyEnsembleError("mean_density: no states");
    const Eigen::Index d = states.front().size();
    ComplexMatrix sum = ComplexMatrix::Zero(d, d);
    for (const auto& psi : states) {
        require_same_dim(psi.size(), d, "mean_density");
        if (est == EstimatorKind::NormalizedNonlinear) {
            const ComplexVector u = normalize(psi);
            sum.noalias() += u * u.adjoint();
        } else {
            sum.noalias() += psi * psi.adjoint();
        }
    }
    return hermitize(sum / double(states.size()));
}

// Sample standard deviation / sqrt(n), one-pass Welford accumulation.
inline double standard_error(const std::vector<double>& samples) {
    if (samples.size() < 2)
        throw InsufficientSamplesError("standard_error: need at least 2 samples");
    double mean = 0.0, m2 = 0.0;
    Eigen::Index n = 0;
    for (double x : samples) {
        ++n;
        const double delta = x - mean;
        mean += delta / double(n);
        m2 += delta * (x - mean);
    }
    return std::sqrt(m2 / double(n - 1) / double(n));
}

namespace detail {

inline int resolve_thread_count(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("NMQSD_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? int(hw) : 1;
}

// Per-block partial sums. Blocks have a fixed path capacity, so the set of
// partials is independent of the worker count; combining them pairwise in
// block order makes the reduction bit-reproducible.
inline constexpr Eigen::Index kEnsembleBlockSize = 256;

struct BlockAccum {
    std::vector<ComplexMatrix> sum_rho;
    std::vector<RealMatrix> sumsq_rho;
    ComplexMatrix sum_obs;
    RealMatrix sumsq_obs;
    RealVector sum_trace, sumsq_trace;
    Eigen::Index count = 0;

    void init(Eigen::Index dim, Eigen::Index n_snap, Eigen::Index n_obs) {
        sum_rho.assign(size_t(n_snap), ComplexMatrix::Zero(dim, dim));
        sumsq_rho.assign(size_t(n_snap), RealMatrix::Zero(dim, dim));
        sum_obs = ComplexMatrix::Zero(n_obs, n_snap);
        sumsq_obs = RealMatrix::Zero(n_obs, n_snap);
        sum_trace = RealVector::Zero(n_snap);
        sumsq_trace = RealVector::Zero(n_snap);
    }

    void merge(const BlockAccum& o) {
        for (size_t s = 0; s < sum_rho.size(); ++s) {
            sum_rho[s] += o.sum_rho[s];
            sumsq_rho[s] += o.sumsq_rho[s];
        }
        sum_obs += o.sum_obs;
        sumsq_obs += o.sumsq_obs;
        sum_trace += o.sum_trace;
        sumsq_trace += o.sumsq_trace;
        count += o.count;
    }
};

}  // namespace detail

// Monte Carlo driver: runs n_paths independent trajectories of `model` and
// accumulates projector averages, observable means and standard errors.
// Deterministic for a given (config, model): per-path noise streams are keyed
// by (global_seed, path index) and the reduction order is fixed regardless of
// the number of worker threads.
template <class Model>
EnsembleResult run_ensemble(const EnsembleConfig& cfg, const Model& model) {
    if (cfg.n_paths < 1) throw ConfigError("run_ensemble: n_paths must be >= 1");
    if (cfg.estimator != model.estimator())
        throw ModelEstimatorMismatchError(
            std::string("run_ensemble: config estimator ") + estimator_name(cfg.estimator) +
            " does not match model estimator " + estimator_name(model.estimator()));
    const Eigen::Index n_steps = cfg.n_steps();
    const Eigen::Index dim = model.dim();
    const Eigen::Index n_obs = Eigen::Index(cfg.observables.size());
    for (const auto& A : cfg.observables) require_same_dim(A.rows(), dim, "run_ensemble");

    std::vector<Eigen::Index> snaps;
    for (Eigen::Index n = 0; n <= n_steps; ++n)
        if (n % cfg.snapshot_stride == 0 || n == n_steps) snaps.push_back(n);
    const Eigen::Index n_snap = Eigen::Index(snaps.size());

    constexpr bool has_path_stat = requires(const Model& m, double& st, const typename Model::State& s) {
        { m.path_stat_init() } -> std::convertible_to<double>;
        m.path_stat_update(st, s, Eigen::Index{}, Eigen::Index{});
    };

    const Eigen::Index n_blocks =
        (cfg.n_paths + detail::kEnsembleBlockSize - 1) / detail::kEnsembleBlockSize;
    std::vector<detail::BlockAccum> blocks(static_cast<size_t>(n_blocks));
    std::vector<double> path_stats(has_path_stat ? size_t(cfg.n_paths) : size_t(0));

    std::atomic<Eigen::Index> next_block{0};
    std::atomic<bool> failed{false};
    std::string failure;
    std::mutex failure_mutex;

    auto worker = [&]() {
        try {
            auto work = model.make_work();
            for (;;) {
                const Eigen::Index b = next_block.fetch_add(1);
                if (b >= n_blocks || failed.load()) break;
                auto& acc = blocks[size_t(b)];
                acc.init(dim, n_snap, n_obs);
                const Eigen::Index p_lo = b * detail::kEnsembleBlockSize;
                const Eigen::Index p_hi = std::min(cfg.n_paths, p_lo + detail::kEnsembleBlockSize);
                for (Eigen::Index p = p_lo; p < p_hi; ++p) {
                    typename Model::State psi = model.initial_state();
                    auto ctx = model.make_path(cfg.global_seed, std::uint64_t(p));
                    double stat = 0.0;
                    if constexpr (has_path_stat) stat = model.path_stat_init();
                    Eigen::Index si = 0;
                    auto record = [&](Eigen::Index step) {
                        if (si >= n_snap || snaps[size_t(si)] != step) return;
                        const double tr = psi.squaredNorm();
                        acc.sum_rho[size_t(si)].noalias() += psi * psi.adjoint();
                        const auto a2 = psi.cwiseAbs2().eval();
                        acc.sumsq_rho[size_t(si)].noalias() += a2 * a2.transpose();
                        for (Eigen::Index o = 0; o < n_obs; ++o) {
                            const Complex x = psi.dot(cfg.observables[size_t(o)] * psi);
                            acc.sum_obs(o, si) += x;
                            acc.sumsq_obs(o, si) += std::norm(x);
                        }
                        acc.sum_trace(si) += tr;
                        acc.sumsq_trace(si) += tr * tr;
                        if constexpr (has_path_stat) model.path_stat_update(stat, psi, si, step);
                        ++si;
                    };
                    record(0);
                    for (Eigen::Index n = 0; n < n_steps; ++n) {
                        model.step(ctx, psi, n, work);
                        record(n + 1);
                    }
                    if constexpr (has_path_stat) path_stats[size_t(p)] = stat;
                    ++acc.count;
                }
            }
        } catch (const std::exception& e) {
            std::lock_guard<std::mutex> lk(failure_mutex);
            if (!failed.exchange(true)) failure = e.what();
        }
    };

    const int n_threads = std::min<Eigen::Index>(detail::resolve_thread_count(cfg.n_threads),
                                                 n_blocks);
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(size_t(n_threads));
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failed.load())
        throw std::runtime_error("run_ensemble: path failed: " + failure);

    // pairwise tree reduction in fixed block order
    std::vector<detail::BlockAccum>& level = blocks;
    while (level.size() > 1) {
        std::vector<detail::BlockAccum> up;
        up.reserve((level.size() + 1) / 2);
        for (size_t i = 0; i < level.size(); i += 2) {
            if (i + 1 < level.size()) level[i].merge(level[i + 1]);
            up.push_back(std::move(level[i]));
        }
        level = std::move(up);
    }
    const detail::BlockAccum& total = level.front();
    const double N = double(cfg.n_paths);

    EnsembleResult res;
    res.n_paths = cfg.n_paths;
    res.estimator = cfg.estimator;
    res.snapshot_steps = snaps;
    res.times.resize(n_snap);
    for (Eigen::Index s = 0; s < n_snap; ++s) res.times(s) = double(snaps[size_t(s)]) * cfg.dt;
    res.mean_density.reserve(size_t(n_snap));
    res.density_var.reserve(size_t(n_snap));
    res.observable_means = total.sum_obs / N;
    res.observable_se.resize(n_obs, n_snap);
    res.trace_mean = total.sum_trace / N;
    res.trace_se.resize(n_snap);
    for (Eigen::Index s = 0; s < n_snap; ++s) {
        const ComplexMatrix mean = total.sum_rho[size_t(s)] / N;
        res.mean_density.push_back(hermitize(mean));
        RealMatrix var = (total.sumsq_rho[size_t(s)] / N - mean.cwiseAbs2()).cwiseMax(0.0);
        if (cfg.n_paths > 1) var *= N / (N - 1.0);
        res.density_var.push_back(std::move(var));
        for (Eigen::Index o = 0; o < n_obs; ++o) {
            double v = total.sumsq_obs(o, s) / N - std::norm(res.observable_means(o, s));
            v = std::max(0.0, v);
            if (cfg.n_paths > 1) v *= N / (N - 1.0);
            res.observable_se(o, s) = std::sqrt(v / N);
        }
        double vt = total.sumsq_trace(s) / N - res.trace_mean(s) * res.trace_mean(s);
        vt = std::max(0.0, vt);
        if (cfg.n_paths > 1) vt *= N / (N - 1.0);
        res.trace_se(s) = std::sqrt(vt / N);
    }
    res.path_stats = std::move(path_stats);
    return res;
}

}  // namespace nmqsd
