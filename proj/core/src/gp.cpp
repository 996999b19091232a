#include "kobo/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kobo::gp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Pairwise geometry shared by every kernel evaluation on a fixed point set;
/// hyperparameter search re-evaluates kernels without touching the points.
struct PairCache {
    Matrix r2;   // squared Euclidean distances
    Matrix r;    // distances
    Matrix dot;  // x_i . y_j
    Vector sx;   // coordinate sums of rows of X
    Vector sy;   // coordinate sums of rows of Y
    int d = 0;
};

PairCache make_cache(const Matrix& X, const Matrix& Y) {
    PairCache c;
    c.d = static_cast<int>(X.cols());
    const auto n = X.rows(), m = Y.rows();
    c.r2.resize(n, m);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < m; ++j)
            c.r2(i, j) = (X.row(i) - Y.row(j)).squaredNorm();
    c.r = c.r2.array().sqrt();
    c.dot = X * Y.transpose();
    c.sx = X.rowwise().sum();
    c.sy = Y.rowwise().sum();
    return c;
}

Matrix base_matrix(BaseKernel id, const PairCache& c, const Hyperparams& hyper) {
    const auto& h = hyper.of(id);
    const double l = h.lengthscale;
    const double s2 = h.variance;
    switch (id) {
        case BaseKernel::SE:
            return s2 * (-c.r2.array() / (2.0 * l * l)).exp();
        case BaseKernel::PER: {
            auto s = (M_PI / h.period * c.r.array()).sin();
            return s2 * (-2.0 * s.square() / (l * l)).exp();
        }
        case BaseKernel::RQ:
            return s2 * (1.0 + c.r2.array() / (2.0 * h.alpha * l * l)).pow(-h.alpha);
        case BaseKernel::MAT: {
            auto z = std::sqrt(5.0) / l * c.r.array();
            return s2 * (1.0 + z + z.square() / 3.0) * (-z).exp();
        }
        case BaseKernel::LIN: {
            Matrix m = c.dot;
            const double cc = h.offset;
            m.array() -= cc * (c.sx.replicate(1, c.sy.size()).array() +
                               c.sy.transpose().replicate(c.sx.size(), 1).array());
            m.array() += cc * cc * c.d;
            return (h.bias_variance + s2 * m.array()).matrix();
        }
    }
    return {};
}

Matrix composite_matrix(const grammar::CompositeKernelSpec& spec, const PairCache& c,
                        const Hyperparams& hyper) {
    Matrix k = Matrix::Zero(c.r2.rows(), c.r2.cols());
    for (const auto& term : spec.terms) {
        Matrix prod = Matrix::Ones(c.r2.rows(), c.r2.cols());
        for (const auto& [id, e] : term.factors) {
            const Matrix base = base_matrix(id, c, hyper);
            for (int rep = 0; rep < e; ++rep) prod = prod.cwiseProduct(base);
        }
        k += prod;
    }
    return k;
}

/// Attempts the factorization of K + sigma_n^2 I with escalating jitter.
/// Returns false when the jitter ceiling is reached.
bool factorize(const Matrix& k, double noise_variance, Eigen::LLT<Matrix>& llt, double& jitter) {
    if (!k.allFinite()) return false;
    const auto n = k.rows();
    const double scale = std::max(k.trace() / static_cast<double>(n), 1e-300);
    double j = 1e-10 * scale;
    const double ceiling = 1e-4 * scale;
    while (true) {
        Matrix a = k;
        a.diagonal().array() += noise_variance + j;
        llt.compute(a);
        if (llt.info() == Eigen::Success) {
            jitter = j;
            return true;
        }
        j *= 10.0;
        if (j > ceiling) return false;
    }
}

// --- hyperparameter packing -------------------------------------------------

enum class Field { Lengthscale, Variance, Period, Alpha, Offset, BiasVariance, Noise };

struct ParamRef {
    BaseKernel id;
    Field field;
};

std::vector<ParamRef> free_params(const grammar::CompositeKernelSpec& spec, bool fit_noise) {
    bool present[kNumBaseKernels] = {};
    for (const auto& term : spec.terms)
        for (const auto& [id, e] : term.factors) present[static_cast<int>(id)] = true;

    std::vector<ParamRef> refs;
    for (BaseKernel id : kAllBaseKernels) {
        if (!present[static_cast<int>(id)]) continue;
        if (id != BaseKernel::LIN) refs.push_back({id, Field::Lengthscale});
        refs.push_back({id, Field::Variance});
        if (id == BaseKernel::PER) refs.push_back({id, Field::Period});
        if (id == BaseKernel::RQ) refs.push_back({id, Field::Alpha});
        if (id == BaseKernel::LIN) {
            refs.push_back({id, Field::Offset});
            refs.push_back({id, Field::BiasVariance});
        }
    }
    if (fit_noise) refs.push_back({BaseKernel::SE, Field::Noise});
    return refs;
}

double pack_one(const Hyperparams& h, const ParamRef& ref, double noise_floor) {
    const auto& k = h.of(ref.id);
    switch (ref.field) {
        case Field::Lengthscale: return std::log(k.lengthscale);
        case Field::Variance: return std::log(k.variance);
        case Field::Period: return std::log(k.period);
        case Field::Alpha: return std::log(k.alpha);
        case Field::Offset: return k.offset;  // unconstrained, linear scale
        case Field::BiasVariance: return std::log(std::max(k.bias_variance, noise_floor));
        case Field::Noise: return std::log(std::max(h.noise_variance, noise_floor));
    }
    return 0.0;
}

void unpack_one(Hyperparams& h, const ParamRef& ref, double v, double noise_floor) {
    auto& k = h.of(ref.id);
    switch (ref.field) {
        case Field::Lengthscale: k.lengthscale = std::exp(v); break;
        case Field::Variance: k.variance = std::exp(v); break;
        case Field::Period: k.period = std::exp(v); break;
        case Field::Alpha: k.alpha = std::exp(v); break;
        case Field::Offset: k.offset = v; break;
        case Field::BiasVariance: k.bias_variance = std::exp(v); break;
        case Field::Noise: h.noise_variance = std::max(std::exp(v), noise_floor); break;
    }
}

double lml_value(const Matrix& k, double noise_variance, const Vector& y) {
    Eigen::LLT<Matrix> llt;
    double jitter = 0;
    if (!factorize(k, noise_variance, llt, jitter)) return kNegInf;
    const Vector alpha = llt.solve(y);
    const double quad = y.dot(alpha);
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const auto n = static_cast<double>(y.size());
    const double v = -0.5 * quad - 0.5 * logdet - 0.5 * n * std::log(2.0 * M_PI);
    return std::isfinite(v) ? v : kNegInf;
}

}  // namespace

double composite_eval(const grammar::CompositeKernelSpec& spec, const Eigen::Ref<const Vector>& x,
                      const Eigen::Ref<const Vector>& y, const Hyperparams& hyper) {
    if (spec.terms.empty()) throw std::invalid_argument("composite_eval: empty spec");
    double sum = 0.0;
    for (const auto& term : spec.terms) {
        double prod = 1.0;
        for (const auto& [id, e] : term.factors) {
            const double v = base_kernel_eval(id, x, y, hyper);
            for (int rep = 0; rep < e; ++rep) prod *= v;
        }
        sum += prod;
    }
    return sum;
}

Matrix covariance(const grammar::CompositeKernelSpec& spec, const Matrix& X,
                  const Hyperparams& hyper) {
    if (X.rows() < 1) throw std::invalid_argument("covariance: empty input set");
    return composite_matrix(spec, make_cache(X, X), hyper);
}

GpModel make_model(const Matrix& X, const Vector& y, const grammar::CompositeKernelSpec& spec,
                   const Hyperparams& hyper) {
    if (X.rows() != y.size()) throw std::invalid_argument("make_model: X/y size mismatch");
    if (!y.allFinite()) throw std::invalid_argument("make_model: non-finite targets");
    GpModel m;
    m.X = X;
    m.y = y;
    m.spec = spec;
    m.hyper = hyper;
    const Matrix k = covariance(spec, X, hyper);
    if (!factorize(k, hyper.noise_variance, m.chol, m.jitter))
        throw NumericalError("make_model: factorization failed at maximum jitter");
    m.alpha = m.chol.solve(y);
    const double logdet = 2.0 * m.chol.matrixL().toDenseMatrix().diagonal().array().log().sum();
    m.log_marginal = -0.5 * y.dot(m.alpha) - 0.5 * logdet -
                     0.5 * static_cast<double>(y.size()) * std::log(2.0 * M_PI);
    return m;
}

GpModel fit(const Matrix& X, const Vector& y, const grammar::CompositeKernelSpec& spec,
            const FitConfig& cfg, const Hyperparams& init) {
    if (X.rows() != y.size()) throw std::invalid_argument("fit: X/y size mismatch");
    if (X.rows() < 1) throw std::invalid_argument("fit: needs at least one observation");
    if (!y.allFinite()) throw std::invalid_argument("fit: non-finite targets");

    const PairCache cache = make_cache(X, X);
    const auto refs = free_params(spec, cfg.fit_noise);
    const int p = static_cast<int>(refs.size());

    auto eval_at = [&](const Vector& theta) {
        Hyperparams h = init;
        for (int i = 0; i < p; ++i) unpack_one(h, refs[i], theta(i), cfg.noise_floor);
        return lml_value(composite_matrix(spec, cache, h), h.noise_variance, y);
    };

    Vector base(p);
    for (int i = 0; i < p; ++i) base(i) = pack_one(init, refs[i], cfg.noise_floor);

    // Starts: defaults, then lengthscales scaled by 0.1 and 10.
    std::vector<Vector> starts{base, base, base};
    for (int i = 0; i < p; ++i) {
        if (refs[i].field == Field::Lengthscale) {
            starts[1](i) += std::log(0.1);
            starts[2](i) += std::log(10.0);
        }
    }

    Vector best_theta = base;
    double best_val = kNegInf;
    for (const Vector& start : starts) {
        Vector theta = start;
        double val = eval_at(theta);
        double step = cfg.init_step;
        int stall = 0;
        for (int iter = 0; iter < cfg.max_iters && step >= cfg.min_step; ++iter) {
            Vector grad(p);
            for (int i = 0; i < p; ++i) {
                Vector tp = theta, tm = theta;
                tp(i) += cfg.fd_step;
                tm(i) -= cfg.fd_step;
                const double fp = eval_at(tp), fm = eval_at(tm);
                grad(i) = (std::isfinite(fp) && std::isfinite(fm))
                              ? (fp - fm) / (2.0 * cfg.fd_step)
                              : 0.0;
            }
            const double gnorm = grad.norm();
            if (gnorm == 0.0) break;
            bool moved = false;
            while (step >= cfg.min_step) {
                const Vector trial = theta + (step / gnorm) * grad;
                const double tval = eval_at(trial);
                if (tval > val) {
                    if (tval - val < 1e-10) {
                        if (++stall >= 2) step = 0;  // converged
                    } else {
                        stall = 0;
                    }
                    theta = trial;
                    val = tval;
                    step *= 1.5;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if (!moved) break;
        }
        if (val > best_val) {  // strict: ties keep the earlier start
            best_val = val;
            best_theta = theta;
        }
    }

    Hyperparams fitted = init;
    for (int i = 0; i < p; ++i) unpack_one(fitted, refs[i], best_theta(i), cfg.noise_floor);
    return make_model(X, y, spec, fitted);
}

Posterior posterior(const GpModel& model, const Matrix& Xq) {
    if (Xq.rows() < 1) throw std::invalid_argument("posterior: empty query set");
    if (Xq.cols() != model.X.cols()) throw std::invalid_argument("posterior: dimension mismatch");
    const Matrix ks = composite_matrix(model.spec, make_cache(model.X, Xq), model.hyper);
    const Matrix kss = covariance(model.spec, Xq, model.hyper);
    Posterior post;
    post.mean = ks.transpose() * model.alpha;
    Matrix v = ks;
    model.chol.matrixL().solveInPlace(v);
    post.cov = kss - v.transpose() * v;
    post.cov.diagonal() = post.cov.diagonal().cwiseMax(0.0);
    return post;
}

void predict(const GpModel& model, const Matrix& Xq, Vector& mean, Vector& var) {
    if (Xq.cols() != model.X.cols()) throw std::invalid_argument("predict: dimension mismatch");
    const Matrix ks = composite_matrix(model.spec, make_cache(model.X, Xq), model.hyper);
    mean = ks.transpose() * model.alpha;
    Matrix v = ks;
    model.chol.matrixL().solveInPlace(v);
    var.resize(Xq.rows());
    for (Eigen::Index i = 0; i < Xq.rows(); ++i) {
        const double kxx = composite_eval(model.spec, Xq.row(i), Xq.row(i), model.hyper);
        var(i) = std::max(kxx - v.col(i).squaredNorm(), 0.0);
    }
}

double log_marginal_likelihood(const GpModel& model) { return model.log_marginal; }

double log_evidence(const Matrix& X, const Vector& y, const grammar::CompositeKernelSpec& spec,
                    const FitConfig& cfg) {
    return fit(X, y, spec, cfg).log_marginal;
}

double normalized_evidence(const Matrix& X, const Vector& y,
                           const grammar::CompositeKernelSpec& spec, const FitConfig& cfg) {
    return log_evidence(X, y, spec, cfg) / static_cast<double>(y.size());
}

int parameter_count(const grammar::CompositeKernelSpec& spec, bool with_noise) {
    bool present[kNumBaseKernels] = {};
    for (const auto& term : spec.terms)
        for (const auto& [id, e] : term.factors) present[static_cast<int>(id)] = true;
    int count = with_noise ? 1 : 0;
    for (BaseKernel id : kAllBaseKernels) {
        if (!present[static_cast<int>(id)]) continue;
        switch (id) {
            case BaseKernel::SE:
            case BaseKernel::MAT: count += 2; break;
            case BaseKernel::PER:
            case BaseKernel::RQ:
            case BaseKernel::LIN: count += 3; break;
        }
    }
    return count;
}

double expected_improvement(double mu, double var, double f_best, double xi) {
    const double sigma = std::sqrt(std::max(var, 0.0));
    const double gap = f_best - mu - xi;
    if (sigma <= 0.0) return std::max(gap, 0.0);
    const double z = gap / sigma;
    const double phi = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
    const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
    return std::max(gap * cdf + sigma * phi, 0.0);
}

double expected_improvement(const GpModel& model, const Eigen::Ref<const Vector>& x, double f_best,
                            double xi) {
    Matrix xq(1, x.size());
    xq.row(0) = x;
    Vector mean, var;
    predict(model, xq, mean, var);
    return expected_improvement(mean(0), var(0), f_best, xi);
}

Vector propose_next(const GpModel& model, const Box& box, std::mt19937_64& rng,
                    const ProposalConfig& cfg) {
    const int d = box.dim();
    if (d == 0) throw std::invalid_argument("propose_next: empty box");
    const int total = cfg.n_candidates + cfg.n_local;
    Matrix cand(total, d);
    for (int i = 0; i < cfg.n_candidates; ++i)
        for (int j = 0; j < d; ++j)
            cand(i, j) = std::uniform_real_distribution<double>(box.lo(j), box.hi(j))(rng);

    Eigen::Index best_row = 0;
    model.y.minCoeff(&best_row);
    const Vector incumbent = model.X.row(best_row);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < cfg.n_local; ++i) {
        Vector x = incumbent;
        for (int j = 0; j < d; ++j) x(j) += cfg.local_scale * (box.hi(j) - box.lo(j)) * gauss(rng);
        cand.row(cfg.n_candidates + i) = box.clamp(x);
    }

    Vector mean, var;
    predict(model, cand, mean, var);
    const double f_best = model.y.minCoeff();
    int best = 0;
    double best_ei = -1.0;
    for (int i = 0; i < total; ++i) {
        const double ei = expected_improvement(mean(i), var(i), f_best, cfg.xi);
        if (ei > best_ei) {
            best_ei = ei;
            best = i;
        }
    }
    return cand.row(best);
}

}  // namespace kobo::gp
