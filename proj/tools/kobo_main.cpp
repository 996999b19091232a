// Command-line front end: budgeted black-box optimization with online kernel
// learning, baseline kernel searches, series structure fitting, and the
// kernel-recovery and reconstruction reports.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "kobo/driver.hpp"

namespace {

using kobo::driver::RunConfig;

void add_run_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--objective", cfg.objective,
                    "staircase | branin | michalewicz | styblinski-tang | hartmann6 | "
                    "interactive | gp:<kernel expression>")
        ->capture_default_str();
    cmd->add_option("--dims", cfg.ambient_dim, "ambient dimension N (free-dimension objectives)")
        ->capture_default_str();
    cmd->add_option("--embed", cfg.embed_dim, "embedding dimension d; 0 disables, active when d < N")
        ->capture_default_str();
    cmd->add_option("--budget", cfg.budget, "objective evaluation budget")->capture_default_str();
    cmd->add_option("--init", cfg.init_samples, "initial uniform random samples")
        ->capture_default_str();
    cmd->add_option("--relearn", cfg.relearn_every, "observations between kernel-learning rounds")
        ->capture_default_str();
    cmd->add_option("--kergpr-iters", cfg.kergpr_iters,
                    "per-round evidence evaluations for every search method")
        ->capture_default_str();
    cmd->add_option("--dataset-size", cfg.combiner.dataset_size,
                    "random composite kernels per VAE training set")
        ->capture_default_str();
    cmd->add_option("--seed", cfg.seed, "run seed")->capture_default_str();
    cmd->add_flag("--interactive", cfg.interactive, "score candidates over stdin/stdout");
    cmd->add_option("--vae-epochs", cfg.vae.epochs, "VAE training epochs")->capture_default_str();
    cmd->add_option("--vae-hidden", cfg.vae.hidden, "VAE hidden width")->capture_default_str();
    cmd->add_option("--vae-batch", cfg.vae.batch_size, "VAE batch size")->capture_default_str();
    cmd->add_option("--vae-lr", cfg.vae.learning_rate, "VAE learning rate")->capture_default_str();
    cmd->add_option("--vae-beta", cfg.vae.beta, "VAE KL weight")->capture_default_str();
    cmd->set_config("--config", "", "flat key = value file; command-line flags override");
}

void print_outcome(const kobo::driver::RunOutcome& out) {
    using kobo::driver::format_number;
    auto join = [](const kobo::Vector& v) {
        std::string s;
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            if (i > 0) s += ";";
            s += kobo::driver::format_number(v(i));
        }
        return s;
    };
    std::cout << "best observed: f = " << format_number(out.best_value) << " at ["
              << join(out.best_point) << "]\n";
    if (out.best_point_ambient.size() != out.best_point.size())
        std::cout << "lifted point: [" << join(out.best_point_ambient) << "]\n";
    std::cout << "surrogate minimum: f = " << format_number(out.surrogate_value) << " at ["
              << join(out.surrogate_argmin) << "]\n";
    std::cout << "final kernel: " << out.final_kernel << " (" << out.kernel_param_count
              << " hyperparameters)\n";
    std::cout << "latent evaluations: " << out.latent_evals << "\n";
}

void write_trace_file(const std::string& path, const kobo::driver::Trace& trace) {
    std::ofstream os(path);
    if (!os) throw std::invalid_argument("cannot open output file '" + path + "'");
    kobo::driver::write_trace_csv(os, trace);
}

std::string sanitize(std::string name) {
    for (char& c : name)
        if (c == ':' || c == '/' || c == ' ') c = '-';
    return name;
}

int run_command(const RunConfig& cfg) {
    const auto out = kobo::driver::run(cfg);
    if (!cfg.out_path.empty()) write_trace_file(cfg.out_path, out.trace);
    print_outcome(out);
    return 0;
}

int compare_command(const RunConfig& base_cfg, const std::vector<std::string>& methods, int seeds,
                    const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::cout << "method,seed,best_f,regret,latent_evals\n";
    for (const std::string& method : methods) {
        for (int seed = 0; seed < seeds; ++seed) {
            RunConfig cfg = base_cfg;
            cfg.method = method;
            cfg.seed = static_cast<std::uint64_t>(seed);
            const auto out = kobo::driver::run(cfg);
            const std::string path =
                out_dir + "/" + sanitize(method) + "_seed" + std::to_string(seed) + ".csv";
            write_trace_file(path, out.trace);
            const double reg = out.trace.empty()
                                   ? std::numeric_limits<double>::quiet_NaN()
                                   : out.trace.back().regret;
            std::cout << method << "," << seed << ","
                      << kobo::driver::format_number(out.best_value) << ","
                      << kobo::driver::format_number(reg) << "," << out.latent_evals << "\n";
        }
    }
    return 0;
}

int fit_series_command(const RunConfig& cfg, const std::string& csv, double prefix,
                       const std::string& method, int grid_len, const std::string& out_path) {
    const auto res = kobo::driver::fit_series(cfg, csv, prefix, method, grid_len);
    std::cout << "selected kernel: " << kobo::grammar::to_string(kobo::grammar::decode(res.code))
              << "\n";
    std::cout << "code: " << kobo::grammar::to_string(res.code) << "\n";
    std::cout << "normalized evidence: " << kobo::driver::format_number(res.evidence) << "\n";
    for (auto id : kobo::gp::kAllBaseKernels)
        std::cout << "  base " << kobo::gp::base_name(id) << ": "
                  << kobo::driver::format_number(res.base_evidence[static_cast<size_t>(id)])
                  << "\n";
    if (!out_path.empty()) {
        std::ofstream os(out_path);
        if (!os) throw std::invalid_argument("cannot open output file '" + out_path + "'");
        os << "t,prediction\n";
        for (Eigen::Index i = 0; i < res.grid.size(); ++i)
            os << kobo::driver::format_number(res.grid(i)) << ","
               << kobo::driver::format_number(res.prediction(i)) << "\n";
    }
    return 0;
}

int recover_kernel_command(RunConfig cfg, const std::string& truth, int q) {
    cfg.objective = "gp:" + truth;
    cfg.budget = q;
    cfg.final_round = true;
    cfg.round_hook = [](int n, const kobo::grammar::KernelCode& code, double evidence) {
        std::cout << "Q=" << n << " kernel="
                  << kobo::grammar::to_string(kobo::grammar::decode(code))
                  << " evidence=" << kobo::driver::format_number(evidence) << "\n";
    };
    const auto out = kobo::driver::run(cfg);
    std::cout << "final kernel: " << out.final_kernel << "\n";
    return 0;
}

int vae_check_command(const RunConfig& cfg, int points) {
    namespace grammar = kobo::grammar;
    std::mt19937_64 rng_codes(kobo::mix_seed(cfg.seed, 4));
    const auto dataset = grammar::sample_dataset(rng_codes, cfg.combiner);

    std::mt19937_64 rng_x(kobo::mix_seed(cfg.seed, 2));
    kobo::Matrix X(points, cfg.ambient_dim);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < points; ++i)
        for (int j = 0; j < cfg.ambient_dim; ++j) X(i, j) = u(rng_x);

    const auto hyper = kobo::gp::Hyperparams::defaults();
    kobo::Matrix reps(dataset[0].length() + kobo::gp::kNumBaseKernels,
                      static_cast<Eigen::Index>(dataset.size()));
    for (size_t i = 0; i < dataset.size(); ++i)
        reps.col(static_cast<Eigen::Index>(i)) =
            grammar::representation(dataset[i], X, hyper).full();

    kobo::vae::TrainConfig vcfg = cfg.vae;
    vcfg.seed = kobo::mix_seed(cfg.seed, 100);
    const auto params = kobo::vae::train(reps, vcfg);

    int exact = 0;
    double sq_err = 0.0;
    for (size_t i = 0; i < dataset.size(); ++i) {
        const auto [mu, logvar] = kobo::vae::encode(params, reps.col(static_cast<Eigen::Index>(i)));
        const kobo::Vector rhat = kobo::vae::decode(params, mu);
        sq_err += (rhat - reps.col(static_cast<Eigen::Index>(i))).squaredNorm();
        if (kobo::vae::nearest_valid_code(rhat) == dataset[i]) ++exact;
    }
    const double pct = 100.0 * exact / static_cast<double>(dataset.size());
    std::cout << "codes: " << dataset.size() << "\n";
    std::cout << "exact recovery: " << exact << " (" << kobo::driver::format_number(pct)
              << "%)\n";
    std::cout << "mean squared reconstruction error: "
              << kobo::driver::format_number(sq_err / static_cast<double>(dataset.size()))
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sample-budgeted black-box optimization with online GP kernel learning"};
    app.require_subcommand(1);

    // run
    auto* run_cmd = app.add_subcommand("run", "optimize one objective and write a trace CSV");
    RunConfig run_cfg;
    std::string run_method = "kobo";
    add_run_options(run_cmd, run_cfg);
    run_cmd->add_option("--method", run_method,
                        "kobo | fixed:<base> | cks | mcmc | boms | onehot-ablation")
        ->capture_default_str();
    run_cmd->add_option("--out", run_cfg.out_path,
                        "trace CSV path; columns iter,point,f,best_f,regret,kernel,evidence,"
                        "latent_evals,wall_ms");

    // compare
    auto* cmp_cmd = app.add_subcommand("compare", "paired-seed runs of several methods");
    RunConfig cmp_cfg;
    std::string cmp_methods = "kobo,fixed:SE,cks,mcmc,boms";
    int cmp_seeds = 10;
    std::string cmp_dir = "compare-out";
    add_run_options(cmp_cmd, cmp_cfg);
    cmp_cmd->add_option("--methods", cmp_methods, "comma-separated method list")
        ->capture_default_str();
    cmp_cmd->add_option("--seeds", cmp_seeds, "number of paired seeds (0..seeds-1)")
        ->capture_default_str();
    cmp_cmd->add_option("--out-dir", cmp_dir, "directory for per-run trace files")
        ->capture_default_str();

    // fit-series
    auto* fit_cmd = app.add_subcommand("fit-series", "learn a kernel from a 1-D time series CSV");
    RunConfig fit_cfg;
    std::string fit_csv;
    std::string fit_method = "kobo";
    double fit_prefix = 0.6;
    int fit_grid = 200;
    std::string fit_out;
    add_run_options(fit_cmd, fit_cfg);
    fit_cmd->add_option("--csv", fit_csv, "two-column time,value CSV")->required();
    fit_cmd->add_option("--prefix", fit_prefix, "observed prefix fraction (e.g. 0.2/0.4/0.6)")
        ->capture_default_str();
    fit_cmd->add_option("--method", fit_method, "kernel search method")->capture_default_str();
    fit_cmd->add_option("--grid", fit_grid, "prediction grid length")->capture_default_str();
    fit_cmd->add_option("--out", fit_out, "prediction CSV path");

    // recover-kernel
    auto* rec_cmd = app.add_subcommand(
        "recover-kernel", "optimize a surrogate drawn from a known kernel and report the "
                          "kernel selected at each learning round");
    RunConfig rec_cfg;
    rec_cfg.ambient_dim = 1;
    rec_cfg.embed_dim = 0;
    std::string rec_truth = "C+D";
    int rec_q = 25;
    add_run_options(rec_cmd, rec_cfg);
    rec_cmd->add_option("--truth", rec_truth, "ground-truth kernel expression, e.g. \"C+D\"")
        ->capture_default_str();
    rec_cmd->add_option("--q", rec_q, "observation budget")->capture_default_str();

    // vae-check
    auto* vae_cmd = app.add_subcommand("vae-check",
                                       "train the kernel VAE on a fresh dataset and report "
                                       "post-projection code recovery");
    RunConfig vae_cfg;
    vae_cfg.ambient_dim = 2;
    int vae_points = 10;
    add_run_options(vae_cmd, vae_cfg);
    vae_cmd->add_option("--points", vae_points, "observation count used for the data distances")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 1;
    }

    try {
        if (run_cmd->parsed()) {
            run_cfg.method = run_method;
            return run_command(run_cfg);
        }
        if (cmp_cmd->parsed()) {
            std::vector<std::string> methods;
            std::stringstream ss(cmp_methods);
            std::string item;
            while (std::getline(ss, item, ','))
                if (!item.empty()) methods.push_back(item);
            if (methods.empty()) throw std::invalid_argument("compare: empty method list");
            return compare_command(cmp_cfg, methods, cmp_seeds, cmp_dir);
        }
        if (fit_cmd->parsed())
            return fit_series_command(fit_cfg, fit_csv, fit_prefix, fit_method, fit_grid, fit_out);
        if (rec_cmd->parsed()) return recover_kernel_command(rec_cfg, rec_truth, rec_q);
        if (vae_cmd->parsed()) return vae_check_command(vae_cfg, vae_points);
    } catch (const kobo::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
