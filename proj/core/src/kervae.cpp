#include "kobo/kervae.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

namespace kobo::vae {

namespace {

Matrix relu(const Matrix& a) { return a.cwiseMax(0.0); }

Matrix affine(const LinearLayer& l, const Matrix& x) {
    return (l.w * x).colwise() + l.b;
}

struct Forward {
    Matrix h1, h2, h3;        // encoder activations
    Matrix mu, logvar, z;
    Matrix d1, d2, d3, rhat;  // decoder activations
};

Forward forward_pass(const VaeParams& p, const Matrix& batch, const Matrix& eps) {
    Forward f;
    f.h1 = relu(affine(p.enc[0], batch));
    f.h2 = relu(affine(p.enc[1], f.h1));
    f.h3 = relu(affine(p.enc[2], f.h2));
    f.mu = affine(p.mu_head, f.h3);
    f.logvar = affine(p.logvar_head, f.h3);
    f.z = f.mu + ((f.logvar * 0.5).array().exp() * eps.array()).matrix();
    f.d1 = relu(affine(p.dec[0], f.z));
    f.d2 = relu(affine(p.dec[1], f.d1));
    f.d3 = relu(affine(p.dec[2], f.d2));
    f.rhat = affine(p.out, f.d3);
    return f;
}

std::vector<LinearLayer*> layer_list(VaeParams& p) {
    return {&p.enc[0], &p.enc[1], &p.enc[2], &p.mu_head, &p.logvar_head,
            &p.dec[0], &p.dec[1], &p.dec[2], &p.out};
}

std::vector<const LinearLayer*> layer_list(const VaeParams& p) {
    return {&p.enc[0], &p.enc[1], &p.enc[2], &p.mu_head, &p.logvar_head,
            &p.dec[0], &p.dec[1], &p.dec[2], &p.out};
}

VaeParams zeros_like(const VaeParams& p) {
    VaeParams z = p;
    for (LinearLayer* l : layer_list(z)) {
        l->w.setZero();
        l->b.setZero();
    }
    return z;
}

void check_batch(const VaeParams& p, const Matrix& batch, const Matrix& eps) {
    if (batch.cols() < 1) throw std::invalid_argument("elbo: empty batch");
    if (batch.rows() != p.input_dim()) throw std::invalid_argument("elbo: input width mismatch");
    if (eps.rows() != p.latent_dim() || eps.cols() != batch.cols())
        throw std::invalid_argument("elbo: eps shape mismatch");
}

Matrix draw_eps(int latent, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix eps(latent, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (int i = 0; i < latent; ++i) eps(i, j) = gauss(rng);
    return eps;
}

}  // namespace

VaeParams init_params(int input_dim, int hidden, int latent, std::mt19937_64& rng) {
    auto make = [&](int rows, int cols) {
        const double bound = std::sqrt(6.0 / (rows + cols));
        std::uniform_real_distribution<double> u(-bound, bound);
        LinearLayer l;
        l.w.resize(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) l.w(i, j) = u(rng);
        l.b = Vector::Zero(rows);
        return l;
    };
    VaeParams p;
    p.enc = {make(hidden, input_dim), make(hidden, hidden), make(hidden, hidden)};
    p.mu_head = make(latent, hidden);
    p.logvar_head = make(latent, hidden);
    p.dec = {make(hidden, latent), make(hidden, hidden), make(hidden, hidden)};
    p.out = make(input_dim, hidden);
    return p;
}

std::pair<Vector, Vector> encode(const VaeParams& params, const Vector& r) {
    if (r.size() != params.input_dim()) throw std::invalid_argument("encode: input width mismatch");
    if (!r.allFinite()) throw std::invalid_argument("encode: non-finite input");
    Matrix x = r;
    const Matrix h3 = relu(affine(params.enc[2], relu(affine(params.enc[1],
                           relu(affine(params.enc[0], x))))));
    return {affine(params.mu_head, h3).col(0), affine(params.logvar_head, h3).col(0)};
}

Vector decode(const VaeParams& params, const Vector& z) {
    if (z.size() != params.latent_dim()) throw std::invalid_argument("decode: latent width mismatch");
    Matrix zc = z;
    const Matrix d3 = relu(affine(params.dec[2], relu(affine(params.dec[1],
                           relu(affine(params.dec[0], zc))))));
    return affine(params.out, d3).col(0);
}

double elbo(const VaeParams& params, const Matrix& batch, const Matrix& eps, double beta) {
    check_batch(params, batch, eps);
    const Forward f = forward_pass(params, batch, eps);
    const auto b = static_cast<double>(batch.cols());
    const double dim = static_cast<double>(batch.rows());
    const double recon = -0.5 * (batch - f.rhat).squaredNorm() -
                         0.5 * dim * std::log(2.0 * M_PI) * b;
    const double kl = 0.5 * (f.mu.array().square() + f.logvar.array().exp() - 1.0 -
                             f.logvar.array())
                                .sum();
    return (recon - beta * kl) / b;
}

double elbo(const VaeParams& params, const Matrix& batch, std::mt19937_64& rng, double beta) {
    return elbo(params, batch, draw_eps(params.latent_dim(), batch.cols(), rng), beta);
}

VaeParams elbo_grad(const VaeParams& params, const Matrix& batch, const Matrix& eps, double beta) {
    check_batch(params, batch, eps);
    const Forward f = forward_pass(params, batch, eps);
    const auto b = static_cast<double>(batch.cols());
    VaeParams g = zeros_like(params);

    auto back_affine = [](const LinearLayer& l, LinearLayer& gl, const Matrix& input,
                          const Matrix& dout) {
        gl.w += dout * input.transpose();
        gl.b += dout.rowwise().sum();
        return Matrix(l.w.transpose() * dout);
    };
    auto relu_mask = [](const Matrix& act, const Matrix& d) {
        return (act.array() > 0.0).select(d, Matrix::Zero(d.rows(), d.cols()));
    };

    // decoder
    const Matrix drhat = (batch - f.rhat) / b;
    Matrix dd3 = relu_mask(f.d3, back_affine(params.out, g.out, f.d3, drhat));
    Matrix dd2 = relu_mask(f.d2, back_affine(params.dec[2], g.dec[2], f.d2, dd3));
    Matrix dd1 = relu_mask(f.d1, back_affine(params.dec[1], g.dec[1], f.d1, dd2));
    const Matrix dz = back_affine(params.dec[0], g.dec[0], f.z, dd1);

    // reparameterization and KL
    const Matrix sigma = (f.logvar * 0.5).array().exp();
    Matrix dmu = dz - (beta / b) * f.mu;
    Matrix dlogvar = (dz.array() * eps.array() * sigma.array() * 0.5).matrix() -
                     (beta / (2.0 * b)) * (f.logvar.array().exp() - 1.0).matrix();

    // encoder
    Matrix dh3 = back_affine(params.mu_head, g.mu_head, f.h3, dmu) +
                 back_affine(params.logvar_head, g.logvar_head, f.h3, dlogvar);
    dh3 = relu_mask(f.h3, dh3);
    Matrix dh2 = relu_mask(f.h2, back_affine(params.enc[2], g.enc[2], f.h2, dh3));
    Matrix dh1 = relu_mask(f.h1, back_affine(params.enc[1], g.enc[1], f.h1, dh2));
    back_affine(params.enc[0], g.enc[0], batch, dh1);
    return g;
}

VaeParams train(const Matrix& dataset, const TrainConfig& cfg) {
    if (dataset.cols() < cfg.batch_size)
        throw std::invalid_argument("train: dataset smaller than batch size");
    std::mt19937_64 rng(cfg.seed);
    VaeParams p = init_params(static_cast<int>(dataset.rows()), cfg.hidden, cfg.latent, rng);
    VaeParams m = zeros_like(p), v = zeros_like(p);
    const double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;
    long long t = 0;

    std::vector<Eigen::Index> order(dataset.cols());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (Eigen::Index start = 0; start < dataset.cols(); start += cfg.batch_size) {
            const auto count = std::min<Eigen::Index>(cfg.batch_size, dataset.cols() - start);
            Matrix batch(dataset.rows(), count);
            for (Eigen::Index i = 0; i < count; ++i) batch.col(i) = dataset.col(order[start + i]);
            const Matrix eps = draw_eps(cfg.latent, count, rng);
            const VaeParams grad = elbo_grad(p, batch, eps, cfg.beta);

            ++t;
            const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
            const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
            auto pl = layer_list(p);
            auto ml = layer_list(m);
            auto vl = layer_list(v);
            auto gl = layer_list(const_cast<VaeParams&>(grad));
            for (size_t i = 0; i < pl.size(); ++i) {
                ml[i]->w = b1 * ml[i]->w + (1.0 - b1) * gl[i]->w;
                ml[i]->b = b1 * ml[i]->b + (1.0 - b1) * gl[i]->b;
                vl[i]->w = b2 * vl[i]->w + (1.0 - b2) * gl[i]->w.cwiseProduct(gl[i]->w);
                vl[i]->b = b2 * vl[i]->b + (1.0 - b2) * gl[i]->b.cwiseProduct(gl[i]->b);
                pl[i]->w.array() += cfg.learning_rate * (ml[i]->w.array() / c1) /
                                    ((vl[i]->w.array() / c2).sqrt() + adam_eps);
                pl[i]->b.array() += cfg.learning_rate * (ml[i]->b.array() / c1) /
                                    ((vl[i]->b.array() / c2).sqrt() + adam_eps);
            }
        }
    }
    return p;
}

grammar::KernelCode nearest_valid_code(const Vector& r_hat, int groups, int max_degree) {
    const int len = groups * gp::kNumBaseKernels;
    if (r_hat.size() < len) throw std::invalid_argument("nearest_valid_code: vector too short");

    grammar::KernelCode code(std::vector<int>(static_cast<size_t>(len), 0));
    for (int i = 0; i < len; ++i) {
        const double v = std::isfinite(r_hat(i)) ? r_hat(i) : 0.0;
        code.exponents[i] = std::clamp(static_cast<int>(std::lround(v)), 0, max_degree);
    }
    for (int g = 0; g < groups; ++g) {
        while (code.group_degree(g) > max_degree) {
            int largest = 0;
            for (int b = 1; b < gp::kNumBaseKernels; ++b)
                if (code.at(g, b) > code.at(g, largest)) largest = b;
            --code.exponents[static_cast<size_t>(g) * gp::kNumBaseKernels + largest];
        }
    }
    if (code.is_zero()) {
        int best = 0;
        for (int i = 1; i < len; ++i) {
            const double vi = std::isfinite(r_hat(i)) ? r_hat(i) : -std::numeric_limits<double>::infinity();
            const double vb = std::isfinite(r_hat(best)) ? r_hat(best) : -std::numeric_limits<double>::infinity();
            if (vi > vb) best = i;
        }
        code.exponents[best] = 1;
    }
    return grammar::canonicalize(std::move(code));
}

void save_params(const VaeParams& params, std::ostream& os) {
    os.precision(17);
    os << "kobo-vae 1\n"
       << params.input_dim() << " " << params.hidden_dim() << " " << params.latent_dim() << "\n";
    for (const LinearLayer* l : layer_list(params)) {
        os << l->w.rows() << " " << l->w.cols() << "\n";
        for (Eigen::Index i = 0; i < l->w.rows(); ++i) {
            for (Eigen::Index j = 0; j < l->w.cols(); ++j) os << l->w(i, j) << " ";
            os << "\n";
        }
        for (Eigen::Index i = 0; i < l->b.size(); ++i) os << l->b(i) << " ";
        os << "\n";
    }
}

VaeParams load_params(std::istream& is) {
    std::string magic;
    int version = 0;
    is >> magic >> version;
    if (magic != "kobo-vae" || version != 1) throw ParseError("load_params: bad header");
    int input = 0, hidden = 0, latent = 0;
    is >> input >> hidden >> latent;
    std::mt19937_64 dummy(0);
    VaeParams p = init_params(input, hidden, latent, dummy);
    for (LinearLayer* l : layer_list(p)) {
        Eigen::Index rows = 0, cols = 0;
        is >> rows >> cols;
        if (rows != l->w.rows() || cols != l->w.cols())
            throw ParseError("load_params: shape mismatch");
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) is >> l->w(i, j);
        for (Eigen::Index i = 0; i < l->b.size(); ++i) is >> l->b(i);
    }
    if (!is) throw ParseError("load_params: truncated stream");
    return p;
}

}  // namespace kobo::vae
