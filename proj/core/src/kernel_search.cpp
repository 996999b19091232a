#include "kobo/kernel_search.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>

namespace kobo::search {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

grammar::KernelCode base_code(gp::BaseKernel id, int groups = 3) {
    std::vector<int> e(static_cast<size_t>(groups) * gp::kNumBaseKernels, 0);
    e[static_cast<size_t>(id)] = 1;
    return grammar::canonicalize(grammar::KernelCode(std::move(e)));
}

/// k + B: open a new product group holding the base alone.
std::optional<grammar::KernelCode> apply_add(const grammar::KernelCode& code, gp::BaseKernel id,
                                             int max_degree) {
    (void)max_degree;
    grammar::KernelCode next = code;
    for (int g = 0; g < next.groups(); ++g) {
        if (next.group_degree(g) == 0) {
            next.exponents[static_cast<size_t>(g) * gp::kNumBaseKernels + static_cast<int>(id)] = 1;
            return grammar::canonicalize(std::move(next));
        }
    }
    return std::nullopt;  // no spare group
}

/// k * B distributes over the sum: every nonzero group gains one factor.
std::optional<grammar::KernelCode> apply_multiply(const grammar::KernelCode& code,
                                                  gp::BaseKernel id, int max_degree) {
    grammar::KernelCode next = code;
    for (int g = 0; g < next.groups(); ++g) {
        if (next.group_degree(g) == 0) continue;
        if (next.group_degree(g) >= max_degree) return std::nullopt;
        ++next.exponents[static_cast<size_t>(g) * gp::kNumBaseKernels + static_cast<int>(id)];
    }
    return grammar::canonicalize(std::move(next));
}

bool can_eval(const EvidenceOracle& oracle, const grammar::KernelCode& code) {
    return oracle.memoized(code) || oracle.remaining_budget() > 0;
}

/// kernel_kernel with ill-conditioned pairs treated as maximally distant.
double kernel_kernel_or_floor(const grammar::KernelCode& a, const grammar::KernelCode& b,
                              const Matrix& x, double sigma, double l,
                              const gp::Hyperparams& hyper) {
    try {
        return kernel_kernel(a, b, x, sigma, l, hyper);
    } catch (const NumericalError&) {
        return sigma * sigma * std::exp(-0.5 / (l * l));  // d_H^2 = 1
    }
}

double logdet_from_llt(const Eigen::LLT<Matrix>& llt) {
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace

EvidenceOracle::EvidenceOracle(Matrix X, Vector y, gp::FitConfig fit_cfg)
    : x_(std::move(X)), y_(std::move(y)), fit_cfg_(fit_cfg), n_(static_cast<int>(y_.size())) {}

EvidenceOracle::EvidenceOracle(std::function<double(const grammar::KernelCode&)> fn, int n)
    : fn_(std::move(fn)), n_(n) {}

void EvidenceOracle::set_data(Matrix X, Vector y) {
    if (fn_) throw std::logic_error("EvidenceOracle: custom oracle has no data");
    x_ = std::move(X);
    y_ = std::move(y);
    n_ = static_cast<int>(y_.size());
}

double EvidenceOracle::fresh(const grammar::KernelCode& code) const {
    const grammar::KernelCode canon = grammar::canonicalize(code);
    if (fn_) return fn_(canon);
    try {
        return gp::normalized_evidence(x_, y_, grammar::decode(canon), fit_cfg_);
    } catch (const NumericalError&) {
        return kNegInf;
    } catch (const std::invalid_argument&) {
        return kNegInf;
    }
}

double EvidenceOracle::operator()(const grammar::KernelCode& code) {
    const grammar::KernelCode canon = grammar::canonicalize(code);
    const auto key = std::make_pair(canon.exponents, n_);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    const double value = fresh(canon);
    memo_.emplace(key, value);
    ++evals_;
    if (budget_ != std::numeric_limits<long long>::max()) --budget_;
    return value;
}

bool EvidenceOracle::memoized(const grammar::KernelCode& code) const {
    const grammar::KernelCode canon = grammar::canonicalize(code);
    return memo_.count(std::make_pair(canon.exponents, n_)) > 0;
}

grammar::KernelCode kergpr_select(const vae::VaeParams& params, EvidenceOracle& oracle,
                                  const std::vector<grammar::KernelCode>& seen_codes, int iters,
                                  std::mt19937_64& rng, const KergprConfig& cfg) {
    if (seen_codes.empty()) throw std::invalid_argument("kergpr_select: no seen codes");

    auto embed = cfg.embed;
    if (!embed)
        embed = [&](const grammar::KernelCode& c) {
            return grammar::representation(c, oracle.inputs(), cfg.rep_hyper).full();
        };
    auto project = cfg.project;
    if (!project)
        project = [&](const Vector& r_hat) {
            const int groups = (params.input_dim() - gp::kNumBaseKernels) / gp::kNumBaseKernels;
            return vae::nearest_valid_code(r_hat, std::max(groups, 1));
        };

    std::vector<Vector> zs;
    std::vector<double> values;
    grammar::KernelCode best;
    double best_value = kNegInf;
    bool have_best = false;

    std::set<std::vector<int>> seeded;
    for (const grammar::KernelCode& raw : seen_codes) {
        const grammar::KernelCode code = grammar::canonicalize(raw);
        if (!seeded.insert(code.exponents).second) continue;
        if (!can_eval(oracle, code)) continue;
        const double value = oracle(code);
        if (!have_best || value > best_value) {
            best = code;
            best_value = value;
            have_best = true;
        }
        if (!std::isfinite(value)) continue;
        const auto [mu, logvar] = vae::encode(params, embed(code));
        zs.push_back(mu);
        values.push_back(value);
    }
    if (!have_best) throw std::invalid_argument("kergpr_select: no evaluable seen codes");
    if (zs.empty() || iters <= 0) return best;

    const int latent = params.latent_dim();
    Box box{Vector(latent), Vector(latent)};
    for (int j = 0; j < latent; ++j) {
        double lo = zs[0](j), hi = zs[0](j);
        for (const Vector& z : zs) {
            lo = std::min(lo, z(j));
            hi = std::max(hi, z(j));
        }
        const double width = hi - lo;
        if (width < 1e-12) {
            box.lo(j) = lo - cfg.degenerate_half_width;
            box.hi(j) = hi + cfg.degenerate_half_width;
        } else {
            box.lo(j) = lo - cfg.box_pad_fraction * width;
            box.hi(j) = hi + cfg.box_pad_fraction * width;
        }
    }

    grammar::CompositeKernelSpec se;
    se.terms.push_back({{{gp::BaseKernel::SE, 1}}});

    for (int it = 0; it < iters; ++it) {
        Matrix zmat(static_cast<Eigen::Index>(zs.size()), latent);
        Vector target(static_cast<Eigen::Index>(zs.size()));
        for (size_t i = 0; i < zs.size(); ++i) {
            zmat.row(static_cast<Eigen::Index>(i)) = zs[i];
            target(static_cast<Eigen::Index>(i)) = -values[i];  // propose_next minimizes
        }
        Vector z_next;
        try {
            const gp::GpModel latent_model = gp::fit(zmat, target, se, cfg.latent_fit);
            z_next = gp::propose_next(latent_model, box, rng, cfg.proposal);
        } catch (const NumericalError&) {
            break;
        }

        const grammar::KernelCode code = project(vae::decode(params, z_next));
        if (!can_eval(oracle, code)) break;
        const double value = oracle(code);
        if (cfg.observer)
            cfg.observer({it + 1, code, value, oracle.latent_evals()});
        if (!std::isfinite(value)) continue;  // failed fit: skip, never feeds the latent model
        zs.push_back(z_next);
        values.push_back(value);
        if (value > best_value) {
            best = code;
            best_value = value;
        }
    }
    return best;
}

grammar::KernelCode mcmc_search(EvidenceOracle& oracle, const grammar::KernelCode& init_code,
                                int steps, std::mt19937_64& rng, McmcState* state,
                                const SearchObserver& observer) {
    constexpr int kRetryCap = 100;
    grammar::KernelCode current = grammar::canonicalize(init_code);
    double current_ev = oracle(current);
    grammar::KernelCode best = current;
    double best_ev = current_ev;
    const double n = static_cast<double>(oracle.data_size());

    McmcState local;
    McmcState& st = state ? *state : local;
    st.current = current;
    st.current_evidence = current_ev;

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> pick_base(0, gp::kNumBaseKernels - 1);

    for (int step = 0; step < steps; ++step) {
        std::optional<grammar::KernelCode> proposal;
        for (int r = 0; r < kRetryCap && !proposal; ++r) {
            const bool add = unit(rng) < 0.5;
            const auto id = static_cast<gp::BaseKernel>(pick_base(rng));
            proposal = add ? apply_add(current, id, 3) : apply_multiply(current, id, 3);
        }
        if (!proposal) continue;  // saturated code, no capacity-respecting move
        if (!can_eval(oracle, *proposal)) break;

        const double prop_ev = oracle(*proposal);
        double acceptance = 0.0;
        if (std::isfinite(prop_ev))
            acceptance = std::min(1.0, std::exp(n * (prop_ev - current_ev)));
        const bool accepted = unit(rng) < acceptance;
        st.history.push_back({*proposal, prop_ev, acceptance, accepted});
        if (accepted) {
            current = *proposal;
            current_ev = prop_ev;
            ++st.accept_count;
        }
        if (std::isfinite(prop_ev) && prop_ev > best_ev) {
            best = *proposal;
            best_ev = prop_ev;
        }
        if (observer) observer({step + 1, *proposal, prop_ev, oracle.latent_evals()});
    }
    st.current = current;
    st.current_evidence = current_ev;
    return best;
}

grammar::KernelCode cks_search(EvidenceOracle& oracle, int max_depth, long long eval_budget,
                               const SearchObserver& observer) {
    if (max_depth < 1) throw std::invalid_argument("cks_search: max_depth must be >= 1");
    long long used = 0;
    int iteration = 0;
    auto try_eval = [&](const grammar::KernelCode& code) -> std::optional<double> {
        if (!oracle.memoized(code)) {
            if (used >= eval_budget || oracle.remaining_budget() <= 0) return std::nullopt;
            ++used;
        }
        const double v = oracle(code);
        if (observer) observer({++iteration, code, v, oracle.latent_evals()});
        return v;
    };

    grammar::KernelCode best;
    double best_ev = kNegInf;
    bool have_best = false;
    for (gp::BaseKernel id : gp::kAllBaseKernels) {
        const grammar::KernelCode code = base_code(id);
        const auto v = try_eval(code);
        if (!v) break;
        if (!have_best || *v > best_ev) {
            best = code;
            best_ev = *v;
            have_best = true;
        }
    }
    if (!have_best) throw std::invalid_argument("cks_search: no evaluations possible");

    grammar::KernelCode incumbent = best;
    double incumbent_ev = best_ev;
    for (int depth = 1; depth < max_depth; ++depth) {
        std::set<std::vector<int>> expansion;
        const auto inc_spec = grammar::decode(incumbent);
        const bool is_base = inc_spec.terms.size() == 1 && inc_spec.terms[0].degree() == 1;
        for (gp::BaseKernel id : gp::kAllBaseKernels) {
            if (auto c = apply_add(incumbent, id, 3)) expansion.insert(c->exponents);
            if (auto c = apply_multiply(incumbent, id, 3)) expansion.insert(c->exponents);
            if (is_base) expansion.insert(base_code(id).exponents);
        }
        expansion.erase(incumbent.exponents);

        grammar::KernelCode level_best;
        double level_ev = kNegInf;
        bool have_level = false;
        bool exhausted = false;
        for (const auto& exps : expansion) {
            const grammar::KernelCode code{std::vector<int>(exps)};
            const auto v = try_eval(code);
            if (!v) {
                exhausted = true;
                break;
            }
            if (!have_level || *v > level_ev) {
                level_best = code;
                level_ev = *v;
                have_level = true;
            }
        }
        if (have_level && level_ev > best_ev) {
            best = level_best;
            best_ev = level_ev;
        }
        if (!have_level || level_ev <= incumbent_ev || exhausted) break;  // no improvement
        incumbent = level_best;
        incumbent_ev = level_ev;
    }
    return best;
}

double hellinger_sq(const Vector& mu_p, const Matrix& kp, const Vector& mu_q, const Matrix& kq) {
    if (mu_p.size() != mu_q.size() || kp.rows() != kq.rows() || kp.rows() != mu_p.size())
        throw std::invalid_argument("hellinger_sq: dimension mismatch");
    Eigen::LLT<Matrix> lp(kp), lq(kq);
    const Matrix m = 0.5 * (kp + kq);
    Eigen::LLT<Matrix> lm(m);
    if (lp.info() != Eigen::Success || lq.info() != Eigen::Success || lm.info() != Eigen::Success)
        throw NumericalError("hellinger_sq: factorization failed");
    const Vector diff = mu_p - mu_q;
    const double quad = diff.dot(lm.solve(diff));
    const double log_bc = 0.25 * logdet_from_llt(lp) + 0.25 * logdet_from_llt(lq) -
                          0.5 * logdet_from_llt(lm) - 0.125 * quad;
    return std::clamp(1.0 - std::exp(log_bc), 0.0, 1.0);
}

double kernel_kernel(const grammar::KernelCode& a, const grammar::KernelCode& b, const Matrix& X,
                     double sigma, double l, const gp::Hyperparams& hyper, double noise_variance) {
    if (X.rows() < 1) throw std::invalid_argument("kernel_kernel: empty observations");
    Matrix ka = gp::covariance(grammar::decode(a), X, hyper);
    Matrix kb = gp::covariance(grammar::decode(b), X, hyper);
    ka.diagonal().array() += noise_variance;
    kb.diagonal().array() += noise_variance;
    const Vector zero = Vector::Zero(X.rows());
    const double d2 = hellinger_sq(zero, ka, zero, kb);
    return sigma * sigma * std::exp(-0.5 * d2 / (l * l));
}

grammar::KernelCode boms_search(EvidenceOracle& oracle, int steps, std::mt19937_64& rng,
                                const BomsConfig& cfg, BomsState* state) {
    (void)rng;  // the search itself is deterministic; kept for interface parity
    if (steps < 1) throw std::invalid_argument("boms_search: steps must be >= 1");
    BomsState local;
    BomsState& st = state ? *state : local;

    std::set<std::vector<int>> in_c;
    for (gp::BaseKernel id : gp::kAllBaseKernels) {
        const grammar::KernelCode code = base_code(id);
        if (in_c.insert(code.exponents).second) st.candidates.push_back(code);
    }

    std::set<std::vector<int>> done;
    auto evaluate = [&](const grammar::KernelCode& code) -> bool {
        if (!can_eval(oracle, code)) return false;
        const double v = oracle(code);
        st.evaluated.push_back(code);
        st.evidences.push_back(v);
        done.insert(code.exponents);
        return true;
    };

    for (const auto& code : std::vector<grammar::KernelCode>(st.candidates))
        if (!evaluate(code)) break;
    if (st.evaluated.empty()) throw std::invalid_argument("boms_search: no evaluations possible");

    auto best_index = [&]() {
        size_t bi = 0;
        for (size_t i = 1; i < st.evidences.size(); ++i)
            if (st.evidences[i] > st.evidences[bi]) bi = i;
        return bi;
    };

    auto expand = [&](const grammar::KernelCode& incumbent) {
        const Matrix ki = gp::covariance(grammar::decode(incumbent), oracle.inputs(), cfg.hyper) +
                          1e-6 * Matrix::Identity(oracle.inputs().rows(), oracle.inputs().rows());
        const Vector zero = Vector::Zero(oracle.inputs().rows());
        for (gp::BaseKernel id : gp::kAllBaseKernels) {
            for (int op = 0; op < 2; ++op) {
                auto cand = op == 0 ? apply_add(incumbent, id, 3)
                                    : apply_multiply(incumbent, id, 3);
                if (!cand || in_c.count(cand->exponents)) continue;
                Matrix ka = gp::covariance(grammar::decode(*cand), oracle.inputs(), cfg.hyper);
                ka.diagonal().array() += 1e-6;
                double d2h = 1.0;
                try {
                    d2h = hellinger_sq(zero, ka, zero, ki);
                } catch (const NumericalError&) {
                    continue;
                }
                if (std::sqrt(d2h) <= cfg.tau) {
                    in_c.insert(cand->exponents);
                    st.candidates.push_back(*cand);
                }
            }
        }
    };
    expand(st.evaluated[best_index()]);

    int iteration = 0;
    for (int step = 0; step < steps; ++step) {
        std::vector<grammar::KernelCode> open;
        for (const auto& c : st.candidates)
            if (!done.count(c.exponents)) open.push_back(c);
        if (open.empty()) break;

        // Surrogate over evidences with the kernel-kernel covariance; the
        // hyperparameters are fixed, so this is a single solve.
        grammar::KernelCode pick = open.front();
        std::vector<size_t> fin;
        for (size_t i = 0; i < st.evidences.size(); ++i)
            if (std::isfinite(st.evidences[i])) fin.push_back(i);
        if (!fin.empty()) {
            const auto m = static_cast<Eigen::Index>(fin.size());
            Matrix kg(m, m);
            for (Eigen::Index i = 0; i < m; ++i)
                for (Eigen::Index j = i; j < m; ++j) {
                    const double v =
                        kernel_kernel_or_floor(st.evaluated[fin[i]], st.evaluated[fin[j]],
                                               oracle.inputs(), cfg.sigma, cfg.l, cfg.hyper);
                    kg(i, j) = v;
                    kg(j, i) = v;
                }
            kg.diagonal().array() += 1e-8;
            Eigen::LLT<Matrix> llt(kg);
            if (llt.info() == Eigen::Success) {
                double mean_g = 0.0;
                for (size_t i : fin) mean_g += st.evidences[i];
                mean_g /= static_cast<double>(fin.size());
                Vector centered(m);
                for (Eigen::Index i = 0; i < m; ++i) centered(i) = st.evidences[fin[i]] - mean_g;
                const Vector alpha = llt.solve(centered);
                double g_best = -std::numeric_limits<double>::infinity();
                for (size_t i : fin) g_best = std::max(g_best, st.evidences[i]);

                double best_ei = -1.0;
                for (const auto& cand : open) {
                    Vector kv(m);
                    for (Eigen::Index i = 0; i < m; ++i)
                        kv(i) = kernel_kernel_or_floor(cand, st.evaluated[fin[i]],
                                                       oracle.inputs(), cfg.sigma, cfg.l,
                                                       cfg.hyper);
                    const double mu = mean_g + kv.dot(alpha);
                    Vector w = kv;
                    llt.matrixL().solveInPlace(w);
                    const double var = std::max(cfg.sigma * cfg.sigma - w.squaredNorm(), 0.0);
                    // EI for maximization of evidence.
                    const double ei = gp::expected_improvement(-mu, var, -g_best, cfg.xi);
                    if (ei > best_ei) {
                        best_ei = ei;
                        pick = cand;
                    }
                }
            }
        }

        if (!evaluate(pick)) break;
        if (cfg.observer)
            cfg.observer({++iteration, pick, st.evidences.back(), oracle.latent_evals()});
        const size_t bi = best_index();
        if (st.evaluated[bi] == pick) expand(pick);
    }
    return st.evaluated[best_index()];
}

}  // namespace kobo::search
