#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "kobo/gp.hpp"

namespace kobo::objectives {

/// A budgeted black-box target: evaluation is counted, inputs must lie in the
/// box, and the true optimum is carried along when known.
class Objective {
  public:
    Objective(std::string id, Box box, std::function<double(const Vector&)> fn,
              std::optional<double> f_star = std::nullopt, std::vector<Vector> minimizers = {});

    double evaluate(const Vector& x);

    const std::string& id() const { return id_; }
    const Box& box() const { return box_; }
    int dim() const { return box_.dim(); }
    std::optional<double> f_star() const { return f_star_; }
    const std::vector<Vector>& minimizers() const { return minimizers_; }
    long long evaluations() const { return count_; }

  private:
    std::string id_;
    Box box_;
    std::function<double(const Vector&)> fn_;
    std::optional<double> f_star_;
    std::vector<Vector> minimizers_;
    long long count_ = 0;
};

double staircase(const Vector& x);                      // sum floor(|x_i + 0.5|)^2 on [-100,100]^N
double branin(const Vector& x);                         // 2-D, three global minima at 0.397887
double michalewicz(const Vector& x, int m = 10);        // [0,pi]^d
double styblinski_tang(const Vector& x);                // [-5,5]^d
double hartmann6(const Vector& x);                      // [0,1]^6

/// Builds a named benchmark; `dims` is honored by the N-dimensional families
/// and must match the fixed-dimension ones.
Objective make_objective(const std::string& id, int dims);
std::vector<std::string> objective_names();

/// Random linear embedding: a d x N Gaussian matrix whose pseudo-inverse
/// lifts low-dimensional points into the ambient box (clamped). The search
/// box in the embedded space is [-sqrt(d), sqrt(d)]^d.
struct EmbeddingMap {
    Matrix b;       // d x N
    Matrix b_pinv;  // N x d
    Box ambient;
    Box embedded;

    int ambient_dim() const { return static_cast<int>(b.cols()); }
    int embedded_dim() const { return static_cast<int>(b.rows()); }
};

EmbeddingMap make_embedding(int ambient_dim, int embedded_dim, std::mt19937_64& rng,
                            const Box& ambient_box);
EmbeddingMap identity_embedding(const Box& ambient_box);
Vector lift(const EmbeddingMap& map, const Vector& y);
double embedded_eval(const EmbeddingMap& map, Objective& f, const Vector& y);

/// Deterministic surrogate drawn from a GP with a known kernel: anchor points
/// on a scrambled low-discrepancy grid, values sampled from the prior, and a
/// noiseless posterior mean as the evaluator.
Objective sample_gp_objective(const grammar::CompositeKernelSpec& truth, const Box& domain,
                              int n_anchor, std::mt19937_64& rng,
                              const gp::Hyperparams& hyper = gp::Hyperparams::defaults());

/// Two-column numeric CSV (optional header), returned sorted by time.
std::pair<Vector, Vector> load_series_csv(const std::string& path);
std::pair<Vector, Vector> load_series(std::istream& is);

/// Line-oriented human-in-the-loop scoring channel:
///   out: "QUERY <id> <v1,v2,...>[ <note>]"
///   in:  one decimal per line.
class OracleSession {
  public:
    OracleSession(std::istream& in, std::ostream& out) : in_(in), out_(out) {}
    double query(const Vector& x, const std::string& note = "");
    int issued() const { return next_id_ - 1; }

  private:
    std::istream& in_;
    std::ostream& out_;
    int next_id_ = 1;
};

double interactive_score(OracleSession& session, const Vector& x, const std::string& note = "");

/// Scrambled Halton points in [0,1)^d, deterministic given the seed.
Matrix halton_points(int count, int dim, std::uint64_t seed);

}  // namespace kobo::objectives
