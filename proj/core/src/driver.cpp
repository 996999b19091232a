#include "kobo/driver.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <ostream>

namespace kobo::driver {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

grammar::KernelCode base_code(gp::BaseKernel id) {
    std::vector<int> e(3 * gp::kNumBaseKernels, 0);
    e[static_cast<size_t>(id)] = 1;
    return grammar::canonicalize(grammar::KernelCode(std::move(e)));
}

struct Standardized {
    Vector y;
    double mean = 0.0;
    double scale = 1.0;
};

Standardized standardize(const Vector& y) {
    Standardized s;
    s.mean = y.mean();
    const double var = (y.array() - s.mean).square().sum() / std::max<double>(1, y.size());
    s.scale = std::sqrt(var);
    if (!(s.scale > 1e-12)) s.scale = 1.0;
    s.y = (y.array() - s.mean) / s.scale;
    return s;
}

struct MethodKind {
    enum Kind { Kobo, Fixed, Cks, Mcmc, Boms, Onehot } kind = Kobo;
    gp::BaseKernel fixed_base = gp::BaseKernel::SE;
};

MethodKind parse_method(const std::string& method) {
    if (method == "kobo") return {MethodKind::Kobo, {}};
    if (method == "cks") return {MethodKind::Cks, {}};
    if (method == "mcmc") return {MethodKind::Mcmc, {}};
    if (method == "boms") return {MethodKind::Boms, {}};
    if (method == "onehot-ablation") return {MethodKind::Onehot, {}};
    if (method.rfind("fixed:", 0) == 0) {
        const auto id = gp::base_from_name(method.substr(6));
        if (!id) throw std::invalid_argument("unknown base kernel in '" + method + "'");
        return {MethodKind::Fixed, *id};
    }
    throw std::invalid_argument("unknown method '" + method + "'");
}

/// Everything a kernel-learning round needs from the outer loop.
struct RoundContext {
    const Matrix& X;
    const Vector& y_std;
    search::EvidenceOracle& oracle;
    grammar::KernelCode active;
    int round_index = 0;
    std::mt19937_64& rng_search;
    std::mt19937_64& rng_combiner;
    const RunConfig& cfg;
    std::map<std::vector<int>, double>& last_evidence;
};

std::vector<grammar::KernelCode> seed_codes(const RoundContext& ctx, int cap_prior = 5) {
    std::vector<grammar::KernelCode> seen;
    seen.push_back(ctx.active);
    for (gp::BaseKernel id : gp::kAllBaseKernels) seen.push_back(base_code(id));
    // strongest previously evaluated codes, their values refreshed on the new data
    std::vector<std::pair<double, std::vector<int>>> prior;
    for (const auto& [exps, ev] : ctx.last_evidence)
        if (std::isfinite(ev)) prior.emplace_back(ev, exps);
    std::sort(prior.begin(), prior.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int i = 0; i < cap_prior && i < static_cast<int>(prior.size()); ++i)
        seen.push_back(grammar::KernelCode(prior[static_cast<size_t>(i)].second));
    return seen;
}

grammar::KernelCode run_round(RoundContext& ctx, MethodKind::Kind kind) {
    const RunConfig& cfg = ctx.cfg;
    ctx.oracle.set_data(ctx.X, ctx.y_std);
    ctx.oracle.set_round_budget(cfg.kergpr_iters);

    auto record = [&](const search::SearchEvent& ev) {
        ctx.last_evidence[grammar::canonicalize(ev.code).exponents] = ev.evidence;
    };

    grammar::KernelCode selected = ctx.active;
    switch (kind) {
        case MethodKind::Kobo:
        case MethodKind::Onehot: {
            const bool onehot = kind == MethodKind::Onehot;
            grammar::CombinerConfig combiner = cfg.combiner;
            const std::vector<grammar::KernelCode> dataset =
                grammar::sample_dataset(ctx.rng_combiner, combiner);

            const gp::Hyperparams rep_hyper = gp::Hyperparams::defaults();
            auto embed = [&](const grammar::KernelCode& code) -> Vector {
                if (!onehot)
                    return grammar::representation(code, ctx.X, rep_hyper).full();
                const auto bits = grammar::one_hot_encode(grammar::decode(code));
                const Vector rd = grammar::representation(code, ctx.X, rep_hyper).data_part;
                Vector r(static_cast<Eigen::Index>(bits.size()) + rd.size());
                for (size_t i = 0; i < bits.size(); ++i)
                    r(static_cast<Eigen::Index>(i)) = bits[i];
                r.tail(rd.size()) = rd;
                return r;
            };

            Matrix reps(embed(dataset[0]).size(), static_cast<Eigen::Index>(dataset.size()));
            for (size_t i = 0; i < dataset.size(); ++i)
                reps.col(static_cast<Eigen::Index>(i)) = embed(dataset[i]);

            vae::TrainConfig vcfg = cfg.vae;
            vcfg.seed = mix_seed(cfg.seed, 100 + static_cast<std::uint64_t>(ctx.round_index));
            const vae::VaeParams params = vae::train(reps, vcfg);

            search::KergprConfig kcfg;
            kcfg.rep_hyper = rep_hyper;
            kcfg.observer = record;
            kcfg.embed = embed;
            if (onehot) {
                const int bit_len = 5 * gp::kNumBaseKernels + 4 * 3;
                kcfg.project = [bit_len](const Vector& r_hat) {
                    return grammar::encode(
                        grammar::nearest_valid_onehot(r_hat.head(bit_len)));
                };
            }
            selected = search::kergpr_select(params, ctx.oracle, seed_codes(ctx),
                                             cfg.kergpr_iters, ctx.rng_search, kcfg);
            break;
        }
        case MethodKind::Mcmc:
            selected = search::mcmc_search(ctx.oracle, ctx.active, cfg.kergpr_iters,
                                           ctx.rng_search, nullptr, record);
            break;
        case MethodKind::Cks:
            selected = search::cks_search(ctx.oracle, 10, cfg.kergpr_iters, record);
            break;
        case MethodKind::Boms: {
            search::BomsConfig bcfg;
            bcfg.observer = record;
            const int steps = std::max(1, cfg.kergpr_iters - gp::kNumBaseKernels);
            selected = search::boms_search(ctx.oracle, steps, ctx.rng_search, bcfg);
            break;
        }
        case MethodKind::Fixed:
            break;
    }
    ctx.last_evidence[selected.exponents] = ctx.oracle(selected);
    return selected;
}

struct Problem {
    objectives::Objective objective;
    std::optional<objectives::EmbeddingMap> embedding;
    Box search_box;
    std::optional<double> f_star;
    std::unique_ptr<objectives::OracleSession> session;  // interactive only

    double evaluate(const Vector& point) {
        if (embedding) return objectives::embedded_eval(*embedding, objective, point);
        return objective.evaluate(point);
    }
    Vector ambient(const Vector& point) const {
        if (embedding) return objectives::lift(*embedding, point);
        return point;
    }
};

Problem build_problem(const RunConfig& cfg) {
    std::mt19937_64 rng_obj(mix_seed(cfg.seed, 6));
    std::optional<objectives::Objective> obj;
    if (cfg.objective == "interactive" || cfg.interactive) {
        auto session = std::make_unique<objectives::OracleSession>(
            cfg.oracle_in ? *cfg.oracle_in : std::cin, cfg.oracle_out ? *cfg.oracle_out : std::cout);
        objectives::OracleSession* raw = session.get();
        // ratings are maximized; the optimizer minimizes the negated score
        objectives::Objective interactive(
            "interactive", Box::cube(cfg.ambient_dim, 0.0, 1.0),
            [raw](const Vector& x) { return -raw->query(x); });
        const Box box = interactive.box();
        return Problem{std::move(interactive), std::nullopt, box, std::nullopt,
                       std::move(session)};
    }
    if (cfg.objective.rfind("gp:", 0) == 0) {
        const auto truth = grammar::parse_expression(cfg.objective.substr(3));
        const int d = std::max(1, cfg.ambient_dim);
        const int anchors = d == 1 ? 64 : 256;
        obj = objectives::sample_gp_objective(truth, Box::cube(d, 0.0, 10.0), anchors, rng_obj);
    } else {
        obj = objectives::make_objective(cfg.objective, cfg.ambient_dim);
    }

    Problem p{std::move(*obj), std::nullopt, Box{}, std::nullopt, nullptr};
    p.f_star = p.objective.f_star();
    const int n = p.objective.dim();
    if (cfg.embed_dim > 0 && cfg.embed_dim < n) {
        std::mt19937_64 rng_embed(mix_seed(cfg.seed, 2));
        p.embedding = objectives::make_embedding(n, cfg.embed_dim, rng_embed, p.objective.box());
        p.search_box = p.embedding->embedded;
    } else {
        p.search_box = p.objective.box();
    }
    return p;
}

RunOutcome run_loop(const RunConfig& cfg, const MethodKind& method) {
    if (cfg.init_samples > cfg.budget)
        throw std::invalid_argument("run: init_samples exceeds the budget");
    if (cfg.relearn_every < 1) throw std::invalid_argument("run: relearn_every must be >= 1");

    Problem problem = build_problem(cfg);
    const int dim = problem.search_box.dim();

    std::mt19937_64 rng_init(mix_seed(cfg.seed, 1));
    std::mt19937_64 rng_propose(mix_seed(cfg.seed, 3));
    std::mt19937_64 rng_combiner(mix_seed(cfg.seed, 4));
    std::mt19937_64 rng_search(mix_seed(cfg.seed, 5));

    Matrix X(cfg.budget, dim);
    Vector y(cfg.budget);
    int n = 0;

    grammar::KernelCode active = base_code(gp::BaseKernel::SE);
    if (method.kind == MethodKind::Fixed) active = base_code(method.fixed_base);

    search::EvidenceOracle oracle(Matrix(), Vector(), cfg.fit);
    std::map<std::vector<int>, double> last_evidence;
    int round_index = 0;

    RunOutcome out;
    out.trace.reserve(static_cast<size_t>(cfg.budget));
    double best = std::numeric_limits<double>::infinity();
    double evidence = kNaN;
    std::optional<gp::GpModel> model;
    Standardized std_y;

    auto record_row = [&](const Vector& point, double value, double wall_ms) {
        best = std::min(best, value);
        TraceRecord row;
        row.iter = n;
        row.point = point;
        row.f = value;
        row.best_f = best;
        row.regret = problem.f_star ? best - *problem.f_star : kNaN;
        row.kernel = grammar::to_string(grammar::decode(active));
        row.evidence = evidence;
        row.latent_evals = oracle.latent_evals();
        row.wall_ms = wall_ms;
        out.trace.push_back(std::move(row));
    };

    Matrix x_seen;  // materialized observations handed to the learning round
    auto maybe_learn = [&] {
        if (method.kind == MethodKind::Fixed) return;
        if (n < cfg.init_samples || (n - cfg.init_samples) % cfg.relearn_every != 0) return;
        ++round_index;
        std_y = standardize(y.head(n));
        x_seen = X.topRows(n);
        RoundContext ctx{x_seen,     std_y.y,      oracle, active, round_index,
                         rng_search, rng_combiner, cfg,    last_evidence};
        active = run_round(ctx, method.kind);
        if (cfg.round_hook) cfg.round_hook(n, active, last_evidence[active.exponents]);
    };

    // initial design
    for (int i = 0; i < cfg.init_samples && n < cfg.budget; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Vector x(dim);
        for (int j = 0; j < dim; ++j)
            x(j) = std::uniform_real_distribution<double>(problem.search_box.lo(j),
                                                          problem.search_box.hi(j))(rng_init);
        const double value = problem.evaluate(x);
        X.row(n) = x;
        y(n) = value;
        ++n;
        const double ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
        record_row(x, value, ms);
    }

    while (n < cfg.budget) {
        maybe_learn();
        const auto t0 = std::chrono::steady_clock::now();
        std_y = standardize(y.head(n));
        model = gp::fit(X.topRows(n), std_y.y, grammar::decode(active), cfg.fit);
        evidence = model->log_marginal / n;
        const Vector x = gp::propose_next(*model, problem.search_box, rng_propose, cfg.proposal);
        const double value = problem.evaluate(x);
        X.row(n) = x;
        y(n) = value;
        ++n;
        const double ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
        record_row(x, value, ms);
    }
    if (cfg.final_round) maybe_learn();

    Eigen::Index best_row = 0;
    y.head(n).minCoeff(&best_row);
    out.best_point = X.row(best_row);
    out.best_point_ambient = problem.ambient(out.best_point);
    out.best_value = y(best_row);
    out.final_kernel = grammar::to_string(grammar::decode(active));
    out.kernel_param_count = gp::parameter_count(grammar::decode(active));
    out.latent_evals = oracle.latent_evals();

    // surrogate minimum over a fresh candidate sweep plus the observations
    if (n > 0) {
        std_y = standardize(y.head(n));
        const gp::GpModel final_model = gp::fit(X.topRows(n), std_y.y, grammar::decode(active),
                                                cfg.fit);
        std::mt19937_64 rng_sur(mix_seed(cfg.seed, 7));
        Matrix cand(cfg.proposal.n_candidates + n, dim);
        for (int i = 0; i < cfg.proposal.n_candidates; ++i)
            for (int j = 0; j < dim; ++j)
                cand(i, j) = std::uniform_real_distribution<double>(
                    problem.search_box.lo(j), problem.search_box.hi(j))(rng_sur);
        cand.bottomRows(n) = X.topRows(n);
        Vector mean, var;
        gp::predict(final_model, cand, mean, var);
        Eigen::Index arg = 0;
        mean.minCoeff(&arg);
        out.surrogate_argmin = cand.row(arg);
        out.surrogate_value = std_y.mean + std_y.scale * mean(arg);
    }
    return out;
}

}  // namespace

RunOutcome run(const RunConfig& cfg) { return run_loop(cfg, parse_method(cfg.method)); }

RunOutcome run_kobo(const RunConfig& cfg) { return run_loop(cfg, {MethodKind::Kobo, {}}); }

RunOutcome run_fixed_kernel(const RunConfig& cfg, gp::BaseKernel base) {
    return run_loop(cfg, {MethodKind::Fixed, base});
}

RunOutcome run_with_search(const RunConfig& cfg, const std::string& method) {
    return run_loop(cfg, parse_method(method));
}

std::vector<double> regret(const Trace& trace, double f_star) {
    std::vector<double> r;
    r.reserve(trace.size());
    for (const auto& row : trace) r.push_back(row.best_f - f_star);
    return r;
}

std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

void write_trace_csv(std::ostream& os, const Trace& trace) {
    os << "iter,point,f,best_f,regret,kernel,evidence,latent_evals,wall_ms\n";
    for (const auto& row : trace) {
        os << row.iter << ",";
        for (Eigen::Index i = 0; i < row.point.size(); ++i) {
            if (i > 0) os << ";";
            os << format_number(row.point(i));
        }
        os << "," << format_number(row.f) << "," << format_number(row.best_f) << ","
           << format_number(row.regret) << "," << row.kernel << ","
           << format_number(row.evidence) << "," << row.latent_evals << ","
           << format_number(row.wall_ms) << "\n";
    }
}

SeriesFitResult fit_series_data(const RunConfig& cfg, const Vector& t, const Vector& v,
                                double prefix_fraction, const std::string& method, int grid_len) {
    const auto total = t.size();
    auto count = static_cast<Eigen::Index>(std::llround(prefix_fraction * static_cast<double>(total)));
    count = std::min(count, total);
    if (count < 5) throw std::invalid_argument("fit_series: fewer than 5 points after prefix cut");
    if (grid_len < 1) throw std::invalid_argument("fit_series: grid_len must be >= 1");

    Matrix X(count, 1);
    X.col(0) = t.head(count);
    const Standardized std_y = standardize(v.head(count));

    search::EvidenceOracle oracle(X, std_y.y, cfg.fit);
    oracle.set_round_budget(cfg.kergpr_iters);
    std::mt19937_64 rng_search(mix_seed(cfg.seed, 5));
    std::mt19937_64 rng_combiner(mix_seed(cfg.seed, 4));

    const MethodKind kind = parse_method(method);
    grammar::KernelCode selected;
    switch (kind.kind) {
        case MethodKind::Kobo:
        case MethodKind::Onehot: {
            std::map<std::vector<int>, double> last_evidence;
            RoundContext ctx{X,          std_y.y,      oracle, base_code(gp::BaseKernel::SE), 1,
                             rng_search, rng_combiner, cfg,    last_evidence};
            selected = run_round(ctx, kind.kind);
            break;
        }
        case MethodKind::Mcmc:
            selected = search::mcmc_search(oracle, base_code(gp::BaseKernel::SE),
                                           cfg.kergpr_iters, rng_search);
            break;
        case MethodKind::Cks:
            selected = search::cks_search(oracle, 10, cfg.kergpr_iters);
            break;
        case MethodKind::Boms: {
            selected = search::boms_search(
                oracle, std::max(1, cfg.kergpr_iters - gp::kNumBaseKernels), rng_search);
            break;
        }
        case MethodKind::Fixed:
            selected = base_code(kind.fixed_base);
            break;
    }

    SeriesFitResult res;
    res.code = selected;
    oracle.set_round_budget(std::numeric_limits<long long>::max());
    res.evidence = oracle(selected);
    for (gp::BaseKernel id : gp::kAllBaseKernels)
        res.base_evidence[static_cast<size_t>(id)] = oracle(base_code(id));

    const gp::GpModel model = gp::fit(X, std_y.y, grammar::decode(selected), cfg.fit);
    res.grid.resize(grid_len);
    const double t0 = t.minCoeff(), t1 = t.maxCoeff();
    for (int i = 0; i < grid_len; ++i)
        res.grid(i) = grid_len == 1 ? t0 : t0 + (t1 - t0) * i / (grid_len - 1.0);
    Matrix xq(grid_len, 1);
    xq.col(0) = res.grid;
    Vector mean, var;
    gp::predict(model, xq, mean, var);
    res.prediction = (mean.array() * std_y.scale + std_y.mean).matrix();
    return res;
}

SeriesFitResult fit_series(const RunConfig& cfg, const std::string& csv_path,
                           double prefix_fraction, const std::string& method, int grid_len) {
    const auto [t, v] = objectives::load_series_csv(csv_path);
    return fit_series_data(cfg, t, v, prefix_fraction, method, grid_len);
}

}  // namespace kobo::driver
