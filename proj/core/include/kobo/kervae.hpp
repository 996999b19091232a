#pragma once

#include <iosfwd>
#include <random>

#include "kobo/kernel_grammar.hpp"

namespace kobo::vae {

struct LinearLayer {
    Matrix w;
    Vector b;
};

/// Encoder: three ReLU hidden layers then linear mean/log-variance heads over
/// a 2-D latent. Decoder mirrors the encoder with a linear output.
struct VaeParams {
    std::array<LinearLayer, 3> enc;
    LinearLayer mu_head;
    LinearLayer logvar_head;
    std::array<LinearLayer, 3> dec;
    LinearLayer out;

    int input_dim() const { return static_cast<int>(enc[0].w.cols()); }
    int hidden_dim() const { return static_cast<int>(enc[0].w.rows()); }
    int latent_dim() const { return static_cast<int>(mu_head.w.rows()); }
};

struct TrainConfig {
    int epochs = 500;
    double learning_rate = 1e-3;
    int batch_size = 32;
    int hidden = 32;
    int latent = 2;
    double beta = 0.1;  // KL weight
    std::uint64_t seed = 0;
};

/// Glorot-uniform initialization, deterministic given the generator state.
VaeParams init_params(int input_dim, int hidden, int latent, std::mt19937_64& rng);

/// Deterministic encoder pass; returns (mu, logvar).
std::pair<Vector, Vector> encode(const VaeParams& params, const Vector& r);

/// Deterministic decoder pass from a latent point.
Vector decode(const VaeParams& params, const Vector& z);

/// Mean ELBO over a batch (columns are samples) with the reparameterized
/// latent z = mu + exp(logvar/2) * eps and a unit-variance Gaussian
/// reconstruction likelihood. eps must be latent_dim x batch.
double elbo(const VaeParams& params, const Matrix& batch, const Matrix& eps, double beta);
double elbo(const VaeParams& params, const Matrix& batch, std::mt19937_64& rng, double beta);

/// Exact reverse-mode gradient of elbo() under the same frozen eps.
VaeParams elbo_grad(const VaeParams& params, const Matrix& batch, const Matrix& eps, double beta);

/// Adam ascent on the ELBO over shuffled mini-batches; deterministic given
/// cfg.seed. dataset columns are samples.
VaeParams train(const Matrix& dataset, const TrainConfig& cfg);

/// Projects a decoded vector onto the nearest valid kernel code: round and
/// clamp the code entries, shed excess degree from the largest exponent
/// (ties: lowest base index), fall back to the strongest entry when all zero,
/// then canonicalize. Total over all finite inputs.
grammar::KernelCode nearest_valid_code(const Vector& r_hat, int groups = 3, int max_degree = 3);

/// Flat text tensor format (shape header + row-major values).
void save_params(const VaeParams& params, std::ostream& os);
VaeParams load_params(std::istream& is);

}  // namespace kobo::vae
