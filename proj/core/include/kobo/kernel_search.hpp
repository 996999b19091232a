#pragma once

#include <functional>
#include <limits>
#include <map>
#include <random>
#include <vector>

#include "kobo/gp.hpp"
#include "kobo/kervae.hpp"

namespace kobo::search {

/// One record per search iteration, consumed by the trace writer.
struct SearchEvent {
    int iteration = 0;
    grammar::KernelCode code;
    double evidence = 0.0;
    long long cumulative_evals = 0;
};
using SearchObserver = std::function<void(const SearchEvent&)>;

/// Memoized normalized model evidence over kernel codes. Values are keyed by
/// (canonical code, |D|) so the cache survives data growth without going
/// stale. A fit failure marks the code -inf and is never retried.
class EvidenceOracle {
  public:
    /// Production oracle: fit + normalized log marginal likelihood on (X, y).
    EvidenceOracle(Matrix X, Vector y, gp::FitConfig fit_cfg = {});

    /// Custom evaluation function (tests and toy spaces); n fakes |D| for the
    /// evidence-scale bookkeeping.
    EvidenceOracle(std::function<double(const grammar::KernelCode&)> fn, int n);

    void set_data(Matrix X, Vector y);

    double operator()(const grammar::KernelCode& code);

    /// Recomputes without touching the memo (consistency checks).
    double fresh(const grammar::KernelCode& code) const;

    bool memoized(const grammar::KernelCode& code) const;
    int data_size() const { return n_; }
    const Matrix& inputs() const { return x_; }
    const Vector& targets() const { return y_; }

    long long latent_evals() const { return evals_; }
    void set_round_budget(long long budget) { budget_ = budget; }
    long long remaining_budget() const { return budget_; }

  private:
    Matrix x_;
    Vector y_;
    gp::FitConfig fit_cfg_;
    std::function<double(const grammar::KernelCode&)> fn_;
    std::map<std::pair<std::vector<int>, int>, double> memo_;
    int n_ = 0;
    long long evals_ = 0;
    long long budget_ = std::numeric_limits<long long>::max();
};

struct KergprConfig {
    gp::FitConfig latent_fit;        // hyperparameter search for the latent SE model
    gp::ProposalConfig proposal;     // EI maximization inside the latent box
    double box_pad_fraction = 0.1;   // expansion of the bounding box per side
    double degenerate_half_width = 1.0;
    gp::Hyperparams rep_hyper = gp::Hyperparams::defaults();  // shared set for r_d
    SearchObserver observer;

    /// Code embedding fed to the encoder; defaults to grammar::representation
    /// on the oracle's inputs. The one-hot ablation swaps both hooks.
    std::function<Vector(const grammar::KernelCode&)> embed;
    /// Projection from a decoded vector back to a valid code; defaults to
    /// vae::nearest_valid_code.
    std::function<grammar::KernelCode(const Vector&)> project;
};

/// Latent-space kernel selection: embed the seen codes through the trained
/// encoder, fit an SE model of evidence over the latent points, and for
/// `iters` rounds propose by EI, decode, project, and evaluate. Returns the
/// best code found (ties: earliest).
grammar::KernelCode kergpr_select(const vae::VaeParams& params, EvidenceOracle& oracle,
                                  const std::vector<grammar::KernelCode>& seen_codes, int iters,
                                  std::mt19937_64& rng, const KergprConfig& cfg = {});

struct McmcState {
    grammar::KernelCode current;
    double current_evidence = 0.0;
    struct Step {
        grammar::KernelCode proposal;
        double proposal_evidence = 0.0;
        double acceptance = 0.0;
        bool accepted = false;
    };
    std::vector<Step> history;
    int accept_count = 0;
};

/// Metropolis-Hastings over codes. Proposal: add or multiply (50/50) a
/// uniformly chosen base kernel, capacity-respecting by redraw. Acceptance
/// min(1, exp(n * (L' - L))) on normalized evidences, proposal ratio treated
/// as one. Returns the best code visited.
grammar::KernelCode mcmc_search(EvidenceOracle& oracle, const grammar::KernelCode& init_code,
                                int steps, std::mt19937_64& rng, McmcState* state = nullptr,
                                const SearchObserver& observer = {});

/// Greedy grammar search: start from the base kernels, expand the incumbent
/// by add / multiply / base-replacement, recurse on the argmax. Stops at
/// max_depth, when no expansion improves, or when eval_budget runs out.
grammar::KernelCode cks_search(EvidenceOracle& oracle, int max_depth,
                               long long eval_budget = std::numeric_limits<long long>::max(),
                               const SearchObserver& observer = {});

/// Squared Hellinger distance between N(muP, kp) and N(muQ, kq), computed via
/// triangular log-determinants and clamped to [0, 1].
double hellinger_sq(const Vector& mu_p, const Matrix& kp, const Vector& mu_q, const Matrix& kq);

/// Kernel-kernel covariance: sigma^2 exp(-d_H^2(P,Q) / (2 l^2)) with P, Q the
/// zero-mean priors of the two codes on the observed inputs.
double kernel_kernel(const grammar::KernelCode& a, const grammar::KernelCode& b, const Matrix& X,
                     double sigma, double l,
                     const gp::Hyperparams& hyper = gp::Hyperparams::defaults(),
                     double noise_variance = 1e-6);

struct BomsConfig {
    double tau = 0.5;    // Hellinger neighborhood threshold
    double sigma = 1.0;  // kernel-kernel output scale
    double l = 0.2;      // kernel-kernel lengthscale
    double xi = 0.01;
    gp::Hyperparams hyper = gp::Hyperparams::defaults();
    SearchObserver observer;
};

struct BomsState {
    std::vector<grammar::KernelCode> candidates;
    std::vector<grammar::KernelCode> evaluated;
    std::vector<double> evidences;
};

/// Model search over the candidate set: evaluate the five bases, then per
/// step fit a GP over evidences under the kernel-kernel covariance, evaluate
/// the EI-maximizing unevaluated candidate, and grow the set with
/// compositions of the incumbent within Hellinger distance tau.
grammar::KernelCode boms_search(EvidenceOracle& oracle, int steps, std::mt19937_64& rng,
                                const BomsConfig& cfg = {}, BomsState* state = nullptr);

}  // namespace kobo::search
