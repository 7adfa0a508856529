#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "nmqsd/io.hpp"
#include "nmqsd/models.hpp"
#include "nmqsd/oracle.hpp"

namespace nmqsd {

// ---------------------------------------------------------------------------
// Experiment configuration. Presets carry the published figure parameters;
// every field can be overridden from the CLI (`--set key=value`).
// ---------------------------------------------------------------------------

struct ExperimentParams {
    double omega = 1.0;       // system frequency (fig2/cut: also time unit)
    double gamma = 1.0;       // exponential kernel decay rate
    double Omega = 0.0;       // kernel central frequency
    double lambda = 1.0;      // system-environment coupling
    double kappa = 0.2;       // spin-oscillator coupling (cut)
    double alpha_cat = 2.0;   // cat amplitude (fig2)
    double n_paths = 10000;   // trajectories per ensemble
    double dt = 1e-3;
    double T = 10.0;          // horizon; fig2: 0 = auto (twice the revival time)
    double seed = 101;
    double truncation = 15;   // Fock truncation (oracle mode / oscillator system)
    double snapshot_stride = 10;

    Eigen::Index paths() const { return Eigen::Index(n_paths); }
    Eigen::Index steps() const {
        const double s = T / dt;
        const auto n = Eigen::Index(std::llround(s));
        if (n < 1 || std::abs(s - double(n)) > 1e-9)
            throw ConfigError("T/dt must be a positive integer");
        return n;
    }
    Eigen::Index stride() const { return Eigen::Index(snapshot_stride); }
    Eigen::Index trunc() const { return Eigen::Index(truncation); }
    std::uint64_t seed_u64() const { return std::uint64_t(seed); }
};

inline const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names = {"fig1a", "fig1b", "fig2",
                                                   "cut",   "markov_limit", "noise_stats"};
    return names;
}

inline ExperimentParams preset_params(const std::string& experiment) {
    ExperimentParams p;
    if (experiment == "fig1a") {
        p.gamma = 1.0;  // gamma = omega
        p.Omega = 0.0;
        p.lambda = 1.0;  // lambda^2 = omega
        p.T = 10.0;
        p.dt = 1e-3;
        p.seed = 101;
        p.snapshot_stride = 10;
    } else if (experiment == "fig1b") {
        p.gamma = 1.0;
        p.Omega = 1.0;  // resonance
        p.lambda = 1.0;
        p.T = 8.0;
        p.dt = 5e-4;  // resolves the Riccati stiffness near t_c
        p.seed = 202;
        p.snapshot_stride = 20;
        p.truncation = 15;
    } else if (experiment == "fig2") {
        p.Omega = 0.5;    // environment oscillator at 0.5 omega
        p.lambda = 0.1;   // coupling between the two oscillators
        p.alpha_cat = 2.0;
        p.n_paths = 1000;
        p.dt = 1e-3;
        p.T = 0.0;  // auto: twice the revival time found by the oracle
        p.seed = 303;
        p.truncation = 30;
        p.snapshot_stride = 100;
    } else if (experiment == "cut") {
        p.kappa = 0.2;
        p.lambda = std::sqrt(0.5);  // lambda^2 = 0.5 omega
        p.T = 5.0;
        p.dt = 1e-3;
        p.seed = 404;
        p.truncation = 3;  // single-excitation sector; level 2 stays empty
        p.snapshot_stride = 10;
    } else if (experiment == "markov_limit") {
        p.Omega = 1.0;
        p.lambda = 1.0;
        p.T = 2.0;
        p.dt = 1e-3;
        p.seed = 505;
        p.snapshot_stride = 25;
    } else if (experiment == "noise_stats") {
        p.gamma = 1.0;   // exponential kernel rate
        p.Omega = 0.7;   // exponential kernel frequency
        p.omega = 1.3;   // single-mode kernel frequency
        p.dt = 0.2;      // grid step
        p.T = 1.8;       // 10-point grid
        p.seed = 606;
        p.snapshot_stride = 1;
    } else {
        throw ConfigError("unknown experiment: " + experiment);
    }
    return p;
}

inline void apply_override(ExperimentParams& p, const std::string& key, double value) {
    static const std::map<std::string, double ExperimentParams::*> fields = {
        {"omega", &ExperimentParams::omega},
        {"gamma", &ExperimentParams::gamma},
        {"Omega", &ExperimentParams::Omega},
        {"lambda", &ExperimentParams::lambda},
        {"kappa", &ExperimentParams::kappa},
        {"alpha_cat", &ExperimentParams::alpha_cat},
        {"n_paths", &ExperimentParams::n_paths},
        {"dt", &ExperimentParams::dt},
        {"T", &ExperimentParams::T},
        {"seed", &ExperimentParams::seed},
        {"truncation", &ExperimentParams::truncation},
        {"snapshot_stride", &ExperimentParams::snapshot_stride},
    };
    const auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("unknown config key: " + key);
    p.*(it->second) = value;
}

inline void validate_params(const std::string& experiment, const ExperimentParams& p) {
    if (std::find(experiment_names().begin(), experiment_names().end(), experiment) ==
        experiment_names().end())
        throw ConfigError("unknown experiment: " + experiment);
    if (!(p.dt > 0.0)) throw ConfigError("dt must be positive");
    if (!(p.omega > 0.0)) throw ConfigError("omega must be positive");
    if (p.n_paths < 1) throw ConfigError("n_paths must be >= 1");
    if (p.snapshot_stride < 1) throw ConfigError("snapshot_stride must be >= 1");
    if (p.truncation < 2) throw ConfigError("truncation must be >= 2");
    if (experiment != "fig2" && !(p.T > 0.0)) throw ConfigError("T must be positive");
    if (p.T > 0.0) (void)p.steps();
    if (experiment == "fig1a" || experiment == "fig1b" || experiment == "markov_limit")
        if (!(p.gamma > 0.0) || !(p.lambda > 0.0))
            throw ConfigError("gamma and lambda must be positive");
    if (experiment == "cut" && !(p.kappa >= 0.0)) throw ConfigError("kappa must be >= 0");
}

inline constexpr int kConfigSchemaVersion = 1;

inline Json make_manifest(const std::string& experiment, const ExperimentParams& p) {
    Json j;
    j["schema_version"] = kConfigSchemaVersion;
    j["experiment"] = experiment;
    Json r;
    r["omega"] = p.omega;
    r["gamma"] = p.gamma;
    r["Omega"] = p.Omega;
    r["lambda"] = p.lambda;
    r["kappa"] = p.kappa;
    r["alpha_cat"] = p.alpha_cat;
    r["n_paths"] = p.n_paths;
    r["dt"] = p.dt;
    r["T"] = p.T;
    r["seed"] = p.seed;
    r["truncation"] = p.truncation;
    r["snapshot_stride"] = p.snapshot_stride;
    j["resolved"] = std::move(r);
    return j;
}

inline std::pair<std::string, ExperimentParams> params_from_manifest(const Json& manifest) {
    if (!manifest.contains("schema_version") ||
        manifest["schema_version"].get<int>() != kConfigSchemaVersion)
        throw ConfigError("manifest: unsupported schema_version");
    const std::string experiment = manifest.at("experiment").get<std::string>();
    ExperimentParams p;
    const Json& r = manifest.at("resolved");
    for (const auto& [key, value] : r.items()) apply_override(p, key, value.get<double>());
    validate_params(experiment, p);
    return {experiment, p};
}

// Config file: {"schema_version": 1, "experiment": "...", "overrides": {...}}
inline std::pair<std::string, ExperimentParams> params_from_config(const Json& config) {
    if (!config.contains("schema_version") ||
        config["schema_version"].get<int>() != kConfigSchemaVersion)
        throw ConfigError("config: unsupported schema_version");
    const std::string experiment = config.at("experiment").get<std::string>();
    ExperimentParams p = preset_params(experiment);
    if (config.contains("overrides"))
        for (const auto& [key, value] : config.at("overrides").items())
            apply_override(p, key, value.get<double>());
    validate_params(experiment, p);
    return {experiment, p};
}

// ---------------------------------------------------------------------------
// Outcome plumbing.
// ---------------------------------------------------------------------------

struct CheckResult {
    std::string name;
    bool passed;
    double value;
    double threshold;
};

struct ExperimentOutcome {
    std::string experiment;
    std::vector<CheckResult> checks;
    Json summary;
    std::vector<std::string> files;

    bool all_passed() const {
        for (const auto& c : checks)
            if (!c.passed) return false;
        return true;
    }
};

class OutputWriter {
  public:
    explicit OutputWriter(const std::filesystem::path& dir) : dir_(dir) {
        std::filesystem::create_directories(dir_);
    }

    void write(const std::string& name, const std::string& text) {
        write_text_file(dir_ / name, text);
        files_.push_back(name);
    }
    void write_json(const std::string& name, const Json& j) { write(name, j.dump(2) + "\n"); }
    const std::vector<std::string>& files() const { return files_; }
    const std::filesystem::path& dir() const { return dir_; }

  private:
    std::filesystem::path dir_;
    std::vector<std::string> files_;
};

namespace detail {

inline void add_check(ExperimentOutcome& out, const std::string& name, double value,
                      double threshold, bool passed) {
    out.checks.push_back({name, passed, value, threshold});
}

inline Json checks_json(const ExperimentOutcome& out) {
    Json arr = Json::array();
    for (const auto& c : out.checks)
        arr.push_back({{"name", c.name},
                       {"passed", c.passed},
                       {"value", c.value},
                       {"threshold", c.threshold}});
    return arr;
}

inline StateVec<2> spin_initial_3up2down() {
    StateVec<2> v;
    v << 3.0, 2.0;
    return v.normalized();
}

inline std::vector<Eigen::Index> to_index_vector(const std::vector<Eigen::Index>& v) { return v; }

}  // namespace detail

// ---------------------------------------------------------------------------
// fig1a: measurement-like spin, exponentially decaying correlation.
// ---------------------------------------------------------------------------

inline ExperimentOutcome run_fig1a(const ExperimentParams& p, OutputWriter& out) {
    ExperimentOutcome outc;
    outc.experiment = "fig1a";
    const auto n_steps = p.steps();
    const StateVec<2> psi0 = detail::spin_initial_3up2down();
    MeasurementSpinModel model(p.omega, p.lambda, ExponentialKernel(p.gamma, p.Omega), psi0,
                               {StepVariant::EulerHeun, p.dt}, n_steps,
                               SpinPathStat::FinalSigmaZ);
    EnsembleConfig cfg;
    cfg.n_paths = p.paths();
    cfg.dt = p.dt;
    cfg.T = p.T;
    cfg.global_seed = p.seed_u64();
    cfg.snapshot_stride = p.stride();
    cfg.observable_names = {"sigma_z"};
    cfg.observables = {sigma_z()};
    const EnsembleResult res = run_ensemble(cfg, model);

    const double target = 5.0 / 13.0;
    double max_dev = 0.0, max_dev_se = 0.0;
    bool constant = true;
    for (Eigen::Index s = 0; s < res.n_snapshots(); ++s) {
        const double dev = std::abs(res.observable_means(0, s).real() - target);
        const double band = 3.0 * res.observable_se(0, s) + 1e-9;
        constant = constant && dev <= band;
        max_dev = std::max(max_dev, dev);
        if (res.observable_se(0, s) > 0.0)
            max_dev_se = std::max(max_dev_se, dev / res.observable_se(0, s));
    }
    detail::add_check(outc, "mean_sigma_z_constant_5_13_within_3se", max_dev_se, 3.0, constant);

    Eigen::Index n_up = 0;
    for (double s : res.path_stats)
        if (s > 0.99) ++n_up;
    const double frac = double(n_up) / double(res.n_paths);
    const double p_up = 9.0 / 13.0;
    const double sigma = std::sqrt(p_up * (1.0 - p_up) / double(res.n_paths));
    detail::add_check(outc, "up_fraction_9_13_within_3sigma", std::abs(frac - p_up), 3.0 * sigma,
                      std::abs(frac - p_up) <= 3.0 * sigma);

    // oracle: dephasing Lindblad conserves sigma_z
    const ComplexMatrix rho0 = psi0 * psi0.adjoint();
    const auto oracle = lindblad_evolve(
        rho0, (0.5 * p.omega * sigma_z()).eval(), {(p.lambda * sigma_z()).eval()}, p.dt, n_steps,
        std::vector<Eigen::Index>(res.snapshot_steps.begin(), res.snapshot_steps.end()));

    out.write("fig1a_ensemble_series.csv", series_csv(ensemble_series_rows(res, cfg.observable_names)));
    out.write_json("fig1a_ensemble_density.json",
                   density_series_json(res.times, res.mean_density, "ensemble:fig1a"));
    out.write("fig1a_oracle_lindblad_series.csv",
              series_csv(density_series_rows(oracle, {"sigma_z"}, {sigma_z()})));

    outc.summary["max_sigma_z_deviation"] = max_dev;
    outc.summary["max_sigma_z_deviation_in_se"] = max_dev_se;
    outc.summary["up_fraction"] = frac;
    outc.summary["settled_fraction"] = [&] {
        Eigen::Index settled = 0;
        for (double s : res.path_stats)
            if (std::abs(s) > 0.99) ++settled;
        return double(settled) / double(res.n_paths);
    }();
    return outc;
}

// ---------------------------------------------------------------------------
// fig1b: dissipative spin on resonance, finite-time absorption.
// ---------------------------------------------------------------------------

inline ExperimentOutcome run_fig1b(const ExperimentParams& p, OutputWriter& out) {
    ExperimentOutcome outc;
    outc.experiment = "fig1b";
    const auto n_steps = p.steps();
    const double tc = critical_time(p.gamma, p.lambda);
    const StateVec<2> psi0 = detail::spin_initial_3up2down();
    DissipativeSpinModel model(p.omega, p.lambda, ExponentialKernel(p.gamma, p.Omega), psi0,
                               {StepVariant::EulerHeun, p.dt}, n_steps,
                               SpinPathStat::MaxSigmaZAfterT0, tc);
    EnsembleConfig cfg;
    cfg.n_paths = p.paths();
    cfg.dt = p.dt;
    cfg.T = p.T;
    cfg.global_seed = p.seed_u64();
    cfg.snapshot_stride = p.stride();
    cfg.observable_names = {"sigma_z"};
    cfg.observables = {sigma_z()};
    const EnsembleResult res = run_ensemble(cfg, model);

    // t_c from the printed formula; on the published parameters it is 3 pi / 2
    const bool default_model = std::abs(p.gamma - p.omega) < 1e-12 &&
                               std::abs(p.lambda * p.lambda - p.omega) < 1e-12 &&
                               std::abs(p.Omega - p.omega) < 1e-12;
    if (default_model)
        detail::add_check(outc, "critical_time_equals_3pi_over_2omega",
                          std::abs(tc - 1.5 * kPi / p.omega), 1e-12,
                          std::abs(tc - 1.5 * kPi / p.omega) <= 1e-12);

    Eigen::Index absorbed = 0;
    double worst = -2.0;
    for (double s : res.path_stats) {
        if (s < -0.99) ++absorbed;
        worst = std::max(worst, s);
    }
    detail::add_check(outc, "all_trajectories_below_m099_after_tc",
                      double(absorbed) / double(res.n_paths), 1.0,
                      absorbed == res.n_paths);

    // pseudomode oracle on the same grid
    const ComplexMatrix rho0 = psi0 * psi0.adjoint();
    const auto oracle = pseudomode_evolve(
        rho0, (0.5 * p.omega * sigma_z()).eval(), (p.lambda * sigma_minus()).eval(),
        ExponentialKernel(p.gamma, p.Omega), p.dt, n_steps,
        std::vector<Eigen::Index>(res.snapshot_steps.begin(), res.snapshot_steps.end()),
        p.trunc());

    double max_dev_pre = 0.0, max_dev_post = 0.0;
    bool pre_ok = true;
    for (Eigen::Index s = 0; s < res.n_snapshots(); ++s) {
        const double ex = (oracle.rho[size_t(s)] * sigma_z()).trace().real();
        const double dev = std::abs(res.observable_means(0, s).real() - ex);
        if (res.times(s) <= tc) {
            pre_ok = pre_ok && dev <= 3.0 * res.observable_se(0, s) + 1e-9;
            max_dev_pre = std::max(max_dev_pre, dev);
        } else {
            max_dev_post = std::max(max_dev_post, dev);
        }
    }
    detail::add_check(outc, "mean_sigma_z_tracks_pseudomode_before_tc", max_dev_pre, -1.0, pre_ok);

    out.write("fig1b_ensemble_series.csv", series_csv(ensemble_series_rows(res, cfg.observable_names)));
    out.write_json("fig1b_ensemble_density.json",
                   density_series_json(res.times, res.mean_density, "ensemble:fig1b"));
    out.write("fig1b_oracle_pseudomode_series.csv",
              series_csv(density_series_rows(oracle, {"sigma_z"}, {sigma_z()})));

    outc.summary["critical_time"] = tc;
    outc.summary["worst_post_tc_sigma_z"] = worst;
    outc.summary["max_pre_tc_oracle_deviation"] = max_dev_pre;
    outc.summary["max_post_tc_oracle_deviation"] = max_dev_post;
    outc.summary["post_tc_note"] =
        "trajectories are frozen in the dark state after the F(t) divergence, so the ensemble "
        "mean is exactly -1 after t_c while the exact reduced state re-excites by O(1e-3); see "
        "the exact amplitude zero-crossing of the memory kernel solution";
    return outc;
}

// ---------------------------------------------------------------------------
// fig2: Schroedinger-cat decay and revival with a single-oscillator
// environment.
// ---------------------------------------------------------------------------

struct PurityTimeline {
    Eigen::Index dip_index = 0;
    Eigen::Index revival_index = 0;
    double dip_value = 1.0;
    double revival_value = 1.0;
};

// Locate the first decoherence dip and the following revival. The dynamics is
// (quasi-)periodic, so the search is bounded: the dip inside [0, t_dip_max],
// the revival inside (t_dip, t_rev_max]; otherwise a later cycle's dip at the
// window edge can shadow the first revival.
inline PurityTimeline purity_timeline(const RealVector& times, const std::vector<double>& purity,
                                      double t_dip_max, double t_rev_max) {
    PurityTimeline t;
    t.dip_value = 2.0;
    for (size_t s = 0; s < purity.size(); ++s) {
        if (times(Eigen::Index(s)) > t_dip_max) break;
        if (purity[s] < t.dip_value) {
            t.dip_value = purity[s];
            t.dip_index = Eigen::Index(s);
        }
    }
    t.revival_value = -1.0;
    for (size_t s = size_t(t.dip_index) + 1; s < purity.size(); ++s) {
        if (times(Eigen::Index(s)) > t_rev_max) break;
        if (purity[s] > t.revival_value) {
            t.revival_value = purity[s];
            t.revival_index = Eigen::Index(s);
        }
    }
    return t;
}

inline ExperimentOutcome run_fig2(const ExperimentParams& p, OutputWriter& out) {
    ExperimentOutcome outc;
    outc.experiment = "fig2";
    const Eigen::Index dim = p.trunc();
    const ComplexVector psi_sys0 = cat_state(p.alpha_cat, dim);
    const SingleModeParams mode{p.Omega, p.lambda, dim};
    const ComplexMatrix Hsys = (p.omega * number_op(dim)).eval();
    const ComplexMatrix a = annihilation_op(dim);

    // oracle first: exact joint evolution over ~1.5 beat periods locates the
    // revival; the default horizon is twice the revival time
    const double delta = p.omega - p.Omega;
    const double beat =
        2.0 * kPi / (2.0 * std::sqrt(0.25 * delta * delta + p.lambda * p.lambda));
    const double snap_dt = p.dt * double(p.stride());
    const auto oracle_snaps = Eigen::Index(std::ceil(1.5 * beat / snap_dt));
    std::vector<Eigen::Index> osteps;
    for (Eigen::Index s = 0; s <= oracle_snaps; ++s) osteps.push_back(s * p.stride());
    const ComplexVector psi_joint0 = tensor_product(psi_sys0, fock_state(0, dim));
    const auto joint =
        joint_unitary_evolve(psi_joint0, Hsys, a, mode, p.dt, osteps.back(), osteps);
    std::vector<double> oracle_purity;
    std::vector<ComplexMatrix> oracle_rho;
    for (const auto& psi : joint.psi) {
        oracle_rho.push_back(reduced_density_from_pure(psi, dim, dim, 1));
        oracle_purity.push_back(purity(oracle_rho.back()));
    }
    const PurityTimeline ot = purity_timeline(joint.times, oracle_purity, 0.75 * beat, 1.3 * beat);
    const double t_rev = joint.times(ot.revival_index);

    double T = p.T;
    if (!(T > 0.0)) T = std::round(2.0 * t_rev / snap_dt) * snap_dt;
    const auto n_steps = Eigen::Index(std::llround(T / p.dt));

    // trajectory ensemble
    DissipativeBosonModel model(p.omega, p.lambda, SingleModeKernel{p.Omega, 1.0}, psi_sys0,
                                {StepVariant::EulerHeun, p.dt}, n_steps);
    EnsembleConfig cfg;
    cfg.n_paths = p.paths();
    cfg.dt = p.dt;
    cfg.T = T;
    cfg.global_seed = p.seed_u64();
    cfg.snapshot_stride = p.stride();
    cfg.observable_names = {"n"};
    cfg.observables = {number_op(dim)};
    const EnsembleResult res = run_ensemble(cfg, model);
    std::vector<double> traj_purity;
    for (const auto& rho : res.mean_density) traj_purity.push_back(purity(rho));
    const PurityTimeline tt = purity_timeline(res.times, traj_purity, 0.75 * beat, 1.3 * beat);

    detail::add_check(outc, "oracle_purity_dips_below_0.7", ot.dip_value, 0.7,
                      ot.dip_value < 0.7);
    detail::add_check(outc, "oracle_purity_recovers_above_0.95", ot.revival_value, 0.95,
                      ot.revival_value > 0.95);
    detail::add_check(outc, "ensemble_purity_dips_below_0.7", tt.dip_value, 0.7,
                      tt.dip_value < 0.7);
    detail::add_check(outc, "ensemble_purity_recovers_above_0.95", tt.revival_value, 0.95,
                      tt.revival_value > 0.95);
    const double t_rev_traj = res.times(tt.revival_index);
    detail::add_check(outc, "revival_time_within_5_percent",
                      std::abs(t_rev_traj - t_rev) / t_rev, 0.05,
                      std::abs(t_rev_traj - t_rev) / t_rev <= 0.05);

    // Q-function fields of trajectory 0 at stride 0.47/omega
    const auto q_stride = Eigen::Index(std::llround(0.47 / (p.omega * p.dt)));
    const QGrid grid{};
    auto ctx = model.make_path(cfg.global_seed, 0);
    auto work = model.make_work();
    ComplexVector psi = psi_sys0;
    std::vector<int> peak_counts;
    std::vector<double> q_times;
    Eigen::Index q_index = 0;
    auto emit_q = [&](Eigen::Index step) {
        const RealMatrix q = q_function(psi, grid);
        char name[64];
        std::snprintf(name, sizeof(name), "fig2_q_field_%03d.csv", int(q_index));
        out.write(name, q_field_csv(q, grid));
        peak_counts.push_back(count_peaks(q));
        q_times.push_back(double(step) * p.dt);
        ++q_index;
    };
    emit_q(0);
    for (Eigen::Index n = 0; n < n_steps; ++n) {
        model.step(ctx, psi, n, work);
        if ((n + 1) % q_stride == 0) emit_q(n + 1);
    }

    // two-peak -> merged -> two-peak structure
    const bool starts_two = peak_counts.front() == 2;
    bool merged = false;
    for (size_t k = 1; k + 1 < peak_counts.size(); ++k)
        if (q_times[k] < t_rev && peak_counts[k] == 1) merged = true;
    Eigen::Index nearest_rev = 0;
    for (size_t k = 0; k < q_times.size(); ++k)
        if (std::abs(q_times[k] - t_rev) < std::abs(q_times[size_t(nearest_rev)] - t_rev))
            nearest_rev = Eigen::Index(k);
    const bool revived_two = peak_counts[size_t(nearest_rev)] == 2;
    detail::add_check(outc, "q_fields_start_with_two_peaks", peak_counts.front(), 2, starts_two);
    detail::add_check(outc, "q_fields_merge_before_revival", merged ? 1.0 : 0.0, 1.0, merged);
    detail::add_check(outc, "q_fields_show_two_peaks_at_revival",
                      peak_counts[size_t(nearest_rev)], 2, revived_two);

    // purity series (ensemble and oracle) in the common series format
    std::vector<SeriesRow> prows;
    for (Eigen::Index s = 0; s < res.n_snapshots(); ++s)
        prows.push_back({res.times(s), "purity", Complex(traj_purity[size_t(s)], 0.0), 0.0});
    out.write("fig2_ensemble_purity_series.csv", series_csv(prows));
    prows.clear();
    for (Eigen::Index s = 0; s < joint.times.size(); ++s)
        prows.push_back({joint.times(s), "purity", Complex(oracle_purity[size_t(s)], 0.0), 0.0});
    out.write("fig2_oracle_joint_purity_series.csv", series_csv(prows));
    out.write("fig2_ensemble_series.csv", series_csv(ensemble_series_rows(res, cfg.observable_names)));

    outc.summary["revival_time_oracle"] = t_rev;
    outc.summary["revival_time_ensemble"] = t_rev_traj;
    outc.summary["resolved_T"] = T;
    outc.summary["q_field_count"] = double(q_index);
    outc.summary["q_peak_counts"] = peak_counts;
    return outc;
}

// ---------------------------------------------------------------------------
// cut: movable Heisenberg cut, spin + distinguished oscillator + Markov bath.
// ---------------------------------------------------------------------------

inline ExperimentOutcome run_cut(const ExperimentParams& p, OutputWriter& out) {
    ExperimentOutcome outc;
    outc.experiment = "cut";
    const auto n_steps = p.steps();
    const StateVec<2> psi0 = detail::spin_initial_3up2down();

    CutModelParams cut;
    cut.omega1 = p.omega;
    cut.omega2 = p.omega;
    cut.kappa = p.kappa;
    cut.lambda = p.lambda;
    cut.truncation = p.trunc();
    const CutReference ref =
        cut_reference(cut, psi0, p.dt, p.T, p.paths(), p.seed_u64(), p.stride());

    // two-channel spin ensemble over (xi, z); stream space offset by one so
    // it is independent of the joint ensemble
    TwoChannelSpinModel two(p.omega, p.omega, p.kappa, p.lambda, psi0,
                            {StepVariant::EulerHeun, p.dt}, n_steps);
    EnsembleConfig cfg;
    cfg.n_paths = p.paths();
    cfg.dt = p.dt;
    cfg.T = p.T;
    cfg.global_seed = p.seed_u64() + 1;
    cfg.estimator = EstimatorKind::RawLinear;
    cfg.snapshot_stride = p.stride();
    cfg.observable_names = {"sigma_x", "sigma_y", "sigma_z"};
    cfg.observables = {sigma_x(), sigma_y(), sigma_z()};
    const EnsembleResult twoch = run_ensemble(cfg, two);

    bool a_vs_b = true;
    double max_ab = 0.0;
    for (Eigen::Index s = 0; s < Eigen::Index(ref.qsd_spin.size()); ++s) {
        const double td = trace_distance(ref.qsd_spin[size_t(s)], ref.lindblad_spin[size_t(s)]);
        const double band = 3.0 * 0.5 * ref.bloch_se(s) + 1e-9;
        a_vs_b = a_vs_b && td <= band;
        max_ab = std::max(max_ab, td);
    }
    detail::add_check(outc, "joint_qsd_vs_joint_lindblad_within_3se", max_ab, -1.0, a_vs_b);

    const ComplexMatrix rhoC = twoch.mean_density.back();
    const double td_ac = trace_distance(ref.qsd_spin.back(), rhoC);
    const double td_bc = trace_distance(ref.lindblad_spin.back(), rhoC);
    detail::add_check(outc, "joint_qsd_vs_two_channel_at_T", td_ac, 0.05, td_ac < 0.05);
    detail::add_check(outc, "joint_lindblad_vs_two_channel_at_T", td_bc, 0.05, td_bc < 0.05);

    out.write("cut_ensemble_series.csv", series_csv(ensemble_series_rows(twoch, cfg.observable_names)));
    out.write_json("cut_two_channel_density.json",
                   density_series_json(twoch.times, twoch.mean_density, "ensemble:two_channel"));
    out.write_json("cut_joint_qsd_density.json",
                   density_series_json(ref.times, ref.qsd_spin, "ensemble:joint_qsd_traced"));
    out.write_json("cut_oracle_lindblad_density.json",
                   density_series_json(ref.times, ref.lindblad_spin, "oracle:joint_lindblad_traced"));

    outc.summary["max_trace_distance_qsd_vs_lindblad"] = max_ab;
    outc.summary["trace_distance_qsd_vs_two_channel_at_T"] = td_ac;
    outc.summary["trace_distance_lindblad_vs_two_channel_at_T"] = td_bc;
    return outc;
}

// ---------------------------------------------------------------------------
// markov_limit: exponential kernel at increasing gamma vs the Lindblad
// oracle.
// ---------------------------------------------------------------------------

inline ExperimentOutcome run_markov_limit(const ExperimentParams& p, OutputWriter& out) {
    ExperimentOutcome outc;
    outc.experiment = "markov_limit";
    const auto n_steps = p.steps();
    const StateVec<2> psi0 = detail::spin_initial_3up2down();
    const ComplexMatrix rho0 = psi0 * psi0.adjoint();
    const std::vector<double> ratios = {10.0, 30.0, 100.0};
    // distance to the Markov limit over the whole window up to T: the
    // pointwise distance at the final time alone is dominated by the decayed
    // tail (the memory transient peaks near t ~ 1/gamma) and sits far below
    // the Monte Carlo resolution
    std::vector<double> max_tds, final_tds;

    for (size_t gi = 0; gi < ratios.size(); ++gi) {
        const double gamma = ratios[gi] * p.lambda * p.lambda;
        DissipativeSpinModel model(p.omega, p.lambda, ExponentialKernel(gamma, p.Omega), psi0,
                                   {StepVariant::EulerHeun, p.dt}, n_steps);
        EnsembleConfig cfg;
        cfg.n_paths = p.paths();
        cfg.dt = p.dt;
        cfg.T = p.T;
        // common random numbers across the gamma family
        cfg.global_seed = p.seed_u64();
        cfg.snapshot_stride = p.stride();
        cfg.observable_names = {"sigma_z"};
        cfg.observables = {sigma_z()};
        const EnsembleResult res = run_ensemble(cfg, model);
        const auto oracle = lindblad_evolve(
            rho0, (0.5 * p.omega * sigma_z()).eval(), {(p.lambda * sigma_minus()).eval()}, p.dt,
            n_steps,
            std::vector<Eigen::Index>(res.snapshot_steps.begin(), res.snapshot_steps.end()));
        double mx = 0.0;
        for (size_t s = 0; s < res.mean_density.size(); ++s)
            mx = std::max(mx, trace_distance(res.mean_density[s], oracle.rho[s]));
        max_tds.push_back(mx);
        final_tds.push_back(trace_distance(res.mean_density.back(), oracle.rho.back()));

        char name[64];
        std::snprintf(name, sizeof(name), "markov_limit_gamma%03d_series.csv", int(ratios[gi]));
        out.write(name, series_csv(ensemble_series_rows(res, cfg.observable_names)));
    }

    detail::add_check(outc, "trace_distance_monotone_in_gamma",
                      max_tds[0] > max_tds[1] && max_tds[1] > max_tds[2] ? 1.0 : 0.0, 1.0,
                      max_tds[0] > max_tds[1] && max_tds[1] > max_tds[2]);
    detail::add_check(outc, "trace_distance_at_gamma_100_below_0.03", max_tds[2], 0.03,
                      max_tds[2] < 0.03);
    outc.summary["max_trace_distances"] = max_tds;
    outc.summary["final_time_trace_distances"] = final_tds;
    outc.summary["gamma_over_lambda2"] = ratios;
    return outc;
}

// ---------------------------------------------------------------------------
// noise_stats: empirical kernel statistics for every kernel/sampler pair.
// ---------------------------------------------------------------------------

struct NoisePairStats {
    std::string kernel, sampler;
    double max_cov_dev_se = 0.0;  // covariance deviation in SE units
    double max_rel_dev_se = 0.0;  // relation-function deviation in SE units
    double max_mean_dev_se = 0.0;
};

template <class Sampler>
NoisePairStats noise_pair_stats(const std::string& kernel_name, const std::string& sampler_name,
                                Sampler&& sample, const ComplexMatrix& expected,
                                const RealVector& grid, Eigen::Index n_paths) {
    const Eigen::Index n = grid.size();
    ComplexMatrix cov_sum = ComplexMatrix::Zero(n, n), rel_sum = ComplexMatrix::Zero(n, n);
    RealMatrix cov_sq_re = RealMatrix::Zero(n, n), cov_sq_im = RealMatrix::Zero(n, n);
    RealMatrix rel_sq_re = RealMatrix::Zero(n, n), rel_sq_im = RealMatrix::Zero(n, n);
    ComplexVector mean_sum = ComplexVector::Zero(n);
    RealVector mean_sq_re = RealVector::Zero(n), mean_sq_im = RealVector::Zero(n);
    for (Eigen::Index path = 0; path < n_paths; ++path) {
        const ComplexVector z = sample(std::uint64_t(path));
        for (Eigen::Index i = 0; i < n; ++i) {
            mean_sum(i) += z(i);
            mean_sq_re(i) += z(i).real() * z(i).real();
            mean_sq_im(i) += z(i).imag() * z(i).imag();
            for (Eigen::Index j = 0; j < n; ++j) {
                const Complex c = std::conj(z(i)) * z(j);
                const Complex r = z(i) * z(j);
                cov_sum(i, j) += c;
                cov_sq_re(i, j) += c.real() * c.real();
                cov_sq_im(i, j) += c.imag() * c.imag();
                rel_sum(i, j) += r;
                rel_sq_re(i, j) += r.real() * r.real();
                rel_sq_im(i, j) += r.imag() * r.imag();
            }
        }
    }
    const double N = double(n_paths);
    NoisePairStats s;
    s.kernel = kernel_name;
    s.sampler = sampler_name;
    auto dev_se = [&](double mean, double target, double sq) {
        const double var = std::max(0.0, sq / N - mean * mean);
        const double se = std::sqrt(var / N);
        const double dev = std::abs(mean - target);
        return dev == 0.0 ? 0.0 : dev / std::max(se, 1e-300);
    };
    for (Eigen::Index i = 0; i < n; ++i) {
        s.max_mean_dev_se = std::max(
            {s.max_mean_dev_se, dev_se(mean_sum(i).real() / N, 0.0, mean_sq_re(i)),
             dev_se(mean_sum(i).imag() / N, 0.0, mean_sq_im(i))});
        for (Eigen::Index j = 0; j < n; ++j) {
            s.max_cov_dev_se = std::max(
                {s.max_cov_dev_se,
                 dev_se(cov_sum(i, j).real() / N, expected(i, j).real(), cov_sq_re(i, j)),
                 dev_se(cov_sum(i, j).imag() / N, expected(i, j).imag(), cov_sq_im(i, j))});
            s.max_rel_dev_se = std::max(
                {s.max_rel_dev_se, dev_se(rel_sum(i, j).real() / N, 0.0, rel_sq_re(i, j)),
                 dev_se(rel_sum(i, j).imag() / N, 0.0, rel_sq_im(i, j))});
        }
    }
    return s;
}

inline ExperimentOutcome run_noise_stats(const ExperimentParams& p, OutputWriter& out) {
    ExperimentOutcome outc;
    outc.experiment = "noise_stats";
    const Eigen::Index n_points = p.steps() + 1;
    RealVector grid(n_points);
    for (Eigen::Index i = 0; i < n_points; ++i) grid(i) = i * p.dt;
    const Eigen::Index n_paths = p.paths();
    const std::uint64_t seed = p.seed_u64();

    const CorrelationKernel expk = ExponentialKernel(p.gamma, p.Omega);
    const CorrelationKernel smk = SingleModeKernel{p.omega, 1.0};
    SampledKernel sampled;
    sampled.times = grid;
    sampled.matrix = build_covariance(expk, grid);
    const CorrelationKernel sk(sampled);

    std::vector<NoisePairStats> stats;
    auto chol = [&](const CorrelationKernel& k, const std::string& name, std::uint64_t salt) {
        const ComplexMatrix C = build_covariance(k, grid);
        const ComplexMatrix factor = covariance_factor(C);
        stats.push_back(noise_pair_stats(
            name, "cholesky",
            [&](std::uint64_t path) {
                return sample_path_factorized(factor, grid, seed + salt, path).values;
            },
            C, grid, n_paths));
    };
    auto recur = [&](const CorrelationKernel& k, const std::string& name, std::uint64_t salt) {
        const ComplexMatrix C = build_covariance(k, grid);
        stats.push_back(noise_pair_stats(
            name, "recursive",
            [&](std::uint64_t path) {
                return sample_path_recursive(k, grid, seed + salt, path).values;
            },
            C, grid, n_paths));
    };
    chol(CorrelationKernel(DeltaKernel{}), "delta", 0);
    chol(expk, "exponential", 1);
    recur(expk, "exponential", 2);
    chol(smk, "single_mode", 3);
    recur(smk, "single_mode", 4);
    chol(sk, "sampled_exponential", 5);

    bool all_ok = true;
    double worst = 0.0;
    Json pair_json = Json::array();
    for (const auto& s : stats) {
        const bool ok = s.max_cov_dev_se <= 5.0 && s.max_rel_dev_se <= 5.0 &&
                        s.max_mean_dev_se <= 5.0;
        all_ok = all_ok && ok;
        worst = std::max({worst, s.max_cov_dev_se, s.max_rel_dev_se, s.max_mean_dev_se});
        pair_json.push_back({{"kernel", s.kernel},
                             {"sampler", s.sampler},
                             {"max_cov_dev_se", s.max_cov_dev_se},
                             {"max_rel_dev_se", s.max_rel_dev_se},
                             {"max_mean_dev_se", s.max_mean_dev_se},
                             {"passed", ok}});
    }
    detail::add_check(outc, "all_kernel_sampler_pairs_within_5se", worst, 5.0, all_ok);
    outc.summary["pairs"] = pair_json;

    // debug export of one realization per analytic kernel
    out.write("noise_stats_exponential_path.csv",
              noise_path_csv(sample_path_recursive(expk, grid, seed, 0)));
    out.write("noise_stats_single_mode_path.csv",
              noise_path_csv(sample_path_recursive(smk, grid, seed, 0)));
    return outc;
}

// ---------------------------------------------------------------------------
// Dispatch and emission.
// ---------------------------------------------------------------------------

inline ExperimentOutcome run_experiment(const std::string& experiment, const ExperimentParams& p,
                                        const std::string& out_dir) {
    validate_params(experiment, p);
    OutputWriter out(out_dir);
    ExperimentOutcome outc;
    if (experiment == "fig1a")
        outc = run_fig1a(p, out);
    else if (experiment == "fig1b")
        outc = run_fig1b(p, out);
    else if (experiment == "fig2")
        outc = run_fig2(p, out);
    else if (experiment == "cut")
        outc = run_cut(p, out);
    else if (experiment == "markov_limit")
        outc = run_markov_limit(p, out);
    else if (experiment == "noise_stats")
        outc = run_noise_stats(p, out);
    else
        throw ConfigError("unknown experiment: " + experiment);

    // manifest records the resolved parameters (fig2: including auto T)
    ExperimentParams resolved = p;
    if (experiment == "fig2" && !(p.T > 0.0) && outc.summary.contains("resolved_T"))
        resolved.T = outc.summary["resolved_T"].get<double>();
    out.write_json("manifest.json", make_manifest(experiment, resolved));

    Json summary;
    summary["experiment"] = experiment;
    summary["all_passed"] = outc.all_passed();
    summary["checks"] = detail::checks_json(outc);
    summary["details"] = outc.summary;
    out.write_json(experiment + "_summary.json", summary);

    outc.files = out.files();
    outc.summary = std::move(summary);
    return outc;
}

}  // namespace nmqsd
