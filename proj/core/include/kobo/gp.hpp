#pragma once

#include <random>

#include "kobo/kernel_grammar.hpp"
#include "kobo/kernels.hpp"

namespace kobo::gp {

/// Settings for the multi-start hyperparameter search used by fit().
struct FitConfig {
    int max_iters = 50;          // gradient-ascent iterations per start
    double fd_step = 1e-5;       // finite-difference step in log space
    double init_step = 0.1;      // initial ascent step length
    double min_step = 1e-7;      // step collapse terminates a start
    double noise_floor = 1e-8;   // lower bound on sigma_n^2 during fitting
    bool fit_noise = true;
};

/// Fitted model with a cached factorization of K + sigma_n^2 I + jitter I.
struct GpModel {
    Matrix X;
    Vector y;
    grammar::CompositeKernelSpec spec;
    Hyperparams hyper;
    Eigen::LLT<Matrix> chol;
    Vector alpha;            // solve(K + sigma_n^2 I + jitter, y)
    double jitter = 0.0;
    double log_marginal = 0.0;

    int n() const { return static_cast<int>(y.size()); }
    int dim() const { return static_cast<int>(X.cols()); }
};

struct Posterior {
    Vector mean;
    Matrix cov;
};

/// Sum over terms of the product over factors, integer exponents expanded as
/// repeated multiplication of the base-kernel value.
double composite_eval(const grammar::CompositeKernelSpec& spec, const Eigen::Ref<const Vector>& x,
                      const Eigen::Ref<const Vector>& y, const Hyperparams& hyper);

/// n x n gram matrix of the composite on the rows of X; exactly symmetric.
Matrix covariance(const grammar::CompositeKernelSpec& spec, const Matrix& X,
                  const Hyperparams& hyper);

/// Factorize K(X) + sigma_n^2 I with escalating jitter (1e-10..1e-4 of the
/// mean diagonal); throws NumericalError when the ceiling is reached.
GpModel make_model(const Matrix& X, const Vector& y, const grammar::CompositeKernelSpec& spec,
                   const Hyperparams& hyper);

/// Multi-start finite-difference gradient ascent on the log marginal
/// likelihood over log-parameters. Starts: defaults, 0.1x and 10x
/// lengthscales. Deterministic; ties go to the earlier start.
GpModel fit(const Matrix& X, const Vector& y, const grammar::CompositeKernelSpec& spec,
            const FitConfig& cfg = {}, const Hyperparams& init = Hyperparams::defaults());

Posterior posterior(const GpModel& model, const Matrix& Xq);

/// Mean and clamped variance diagonal at query points, no full covariance.
void predict(const GpModel& model, const Matrix& Xq, Vector& mean, Vector& var);

/// -1/2 y'(K+s2I)^{-1}y - 1/2 log|K+s2I| - (n/2) log(2pi) for the model's
/// cached factorization.
double log_marginal_likelihood(const GpModel& model);

/// fit() followed by the log marginal likelihood of the fitted model.
double log_evidence(const Matrix& X, const Vector& y, const grammar::CompositeKernelSpec& spec,
                    const FitConfig& cfg = {});

/// log_evidence divided by the number of observations.
double normalized_evidence(const Matrix& X, const Vector& y,
                           const grammar::CompositeKernelSpec& spec, const FitConfig& cfg = {});

/// Number of free hyperparameters of a composition (per-identifier sharing),
/// reported in run summaries.
int parameter_count(const grammar::CompositeKernelSpec& spec, bool with_noise = true);

/// Expected improvement for minimization at posterior (mu, var) given the
/// incumbent f_best and exploration margin xi.
double expected_improvement(double mu, double var, double f_best, double xi);
double expected_improvement(const GpModel& model, const Eigen::Ref<const Vector>& x, double f_best,
                            double xi);

struct ProposalConfig {
    int n_candidates = 2048;
    int n_local = 16;           // Gaussian jitters of the incumbent
    double local_scale = 0.01;  // fraction of box width
    double xi = 0.01;
};

/// Argmax of EI over uniform candidates plus local perturbations of the best
/// observed point; ties keep the lowest candidate index.
Vector propose_next(const GpModel& model, const Box& box, std::mt19937_64& rng,
                    const ProposalConfig& cfg = {});

}  // namespace kobo::gp
