#pragma once

#include <iosfwd>
#include <optional>

#include "kobo/kernel_search.hpp"
#include "kobo/objectives.hpp"

namespace kobo::driver {

struct RunConfig {
    std::string objective = "staircase";
    int ambient_dim = 50;   // N; fixed-dimension objectives override it
    int embed_dim = 6;      // d; embedding applies only when 0 < d < N
    int budget = 100;       // total objective evaluations
    int init_samples = 5;   // uniform random points before acquisition starts
    int relearn_every = 5;  // kernel-learning cadence v
    int kergpr_iters = 20;  // per-round evidence-evaluation budget, all methods
    std::string method = "kobo";  // kobo | fixed:<base> | cks | mcmc | boms | onehot-ablation
    grammar::CombinerConfig combiner;
    vae::TrainConfig vae;
    gp::FitConfig fit;
    gp::ProposalConfig proposal;
    std::uint64_t seed = 0;
    std::string out_path;
    bool interactive = false;

    /// Runs one more kernel-learning round after the final observation
    /// (kernel-recovery protocol); off for plain runs.
    bool final_round = false;

    /// Interactive oracle channel; stdin/stdout when unset.
    std::istream* oracle_in = nullptr;
    std::ostream* oracle_out = nullptr;

    /// Called after every kernel-learning round with the observation count,
    /// the selected kernel, and its normalized evidence.
    std::function<void(int, const grammar::KernelCode&, double)> round_hook;
};

struct TraceRecord {
    int iter = 0;
    Vector point;  // search-space coordinates (embedded space when active)
    double f = 0.0;
    double best_f = 0.0;
    double regret = std::numeric_limits<double>::quiet_NaN();
    std::string kernel;
    double evidence = std::numeric_limits<double>::quiet_NaN();
    long long latent_evals = 0;
    double wall_ms = 0.0;
};
using Trace = std::vector<TraceRecord>;

struct RunOutcome {
    Trace trace;
    Vector best_point;          // search-space coordinates of the best observation
    Vector best_point_ambient;  // lifted coordinates when an embedding is active
    double best_value = 0.0;
    Vector surrogate_argmin;    // minimizer of the final surrogate mean over candidates
    double surrogate_value = 0.0;
    std::string final_kernel;
    int kernel_param_count = 0;
    long long latent_evals = 0;
};

RunOutcome run(const RunConfig& cfg);
RunOutcome run_kobo(const RunConfig& cfg);
RunOutcome run_fixed_kernel(const RunConfig& cfg, gp::BaseKernel base);
RunOutcome run_with_search(const RunConfig& cfg, const std::string& method);

/// Per-row best-so-far minus the true minimum.
std::vector<double> regret(const Trace& trace, double f_star);

void write_trace_csv(std::ostream& os, const Trace& trace);
std::string format_number(double v);  // 9 significant digits

struct SeriesFitResult {
    grammar::KernelCode code;
    double evidence = 0.0;
    std::array<double, gp::kNumBaseKernels> base_evidence{};
    Vector grid;        // query times spanning the full series
    Vector prediction;  // posterior mean on the grid, original units
};

/// Kernel search on the leading fraction of a 1-D series, then posterior-mean
/// extrapolation over the full time range.
SeriesFitResult fit_series(const RunConfig& cfg, const std::string& csv_path,
                           double prefix_fraction, const std::string& method, int grid_len = 200);
SeriesFitResult fit_series_data(const RunConfig& cfg, const Vector& t, const Vector& v,
                                double prefix_fraction, const std::string& method,
                                int grid_len = 200);

}  // namespace kobo::driver
