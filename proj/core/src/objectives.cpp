#include "kobo/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace kobo::objectives {

Objective::Objective(std::string id, Box box, std::function<double(const Vector&)> fn,
                     std::optional<double> f_star, std::vector<Vector> minimizers)
    : id_(std::move(id)),
      box_(std::move(box)),
      fn_(std::move(fn)),
      f_star_(f_star),
      minimizers_(std::move(minimizers)) {}

double Objective::evaluate(const Vector& x) {
    if (x.size() != box_.dim())
        throw std::invalid_argument(id_ + ": dimension mismatch");
    if (!box_.contains(x, 1e-12))
        throw std::domain_error(id_ + ": input outside the evaluation box");
    ++count_;
    return fn_(x);
}

double staircase(const Vector& x) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double step = std::floor(std::abs(x(i) + 0.5));
        sum += step * step;
    }
    return sum;
}

double branin(const Vector& x) {
    if (x.size() != 2) throw std::invalid_argument("branin: needs 2 dimensions");
    const double a = 1.0, b = 5.1 / (4.0 * M_PI * M_PI), c = 5.0 / M_PI;
    const double r = 6.0, s = 10.0, t = 1.0 / (8.0 * M_PI);
    const double u = x(1) - b * x(0) * x(0) + c * x(0) - r;
    return a * u * u + s * (1.0 - t) * std::cos(x(0)) + s;
}

double michalewicz(const Vector& x, int m) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double si = std::sin(static_cast<double>(i + 1) * x(i) * x(i) / M_PI);
        sum += std::sin(x(i)) * std::pow(si, 2 * m);
    }
    return -sum;
}

double styblinski_tang(const Vector& x) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double v = x(i);
        sum += v * v * v * v - 16.0 * v * v + 5.0 * v;
    }
    return 0.5 * sum;
}

double hartmann6(const Vector& x) {
    if (x.size() != 6) throw std::invalid_argument("hartmann6: needs 6 dimensions");
    static const double alpha[4] = {1.0, 1.2, 3.0, 3.2};
    static const double a[4][6] = {{10, 3, 17, 3.5, 1.7, 8},
                                   {0.05, 10, 17, 0.1, 8, 14},
                                   {3, 3.5, 1.7, 10, 17, 8},
                                   {17, 8, 0.05, 10, 0.1, 14}};
    static const double p[4][6] = {{0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886},
                                   {0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991},
                                   {0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650},
                                   {0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381}};
    double sum = 0.0;
    for (int i = 0; i < 4; ++i) {
        double inner = 0.0;
        for (int j = 0; j < 6; ++j) inner += a[i][j] * (x(j) - p[i][j]) * (x(j) - p[i][j]);
        sum += alpha[i] * std::exp(-inner);
    }
    return -sum;
}

Objective make_objective(const std::string& id, int dims) {
    if (id == "staircase") {
        std::vector<Vector> mins{Vector::Zero(dims)};
        return Objective(id, Box::cube(dims, -100.0, 100.0), staircase, 0.0, std::move(mins));
    }
    if (id == "branin") {
        Box box{Vector(2), Vector(2)};
        box.lo << -5.0, 0.0;
        box.hi << 10.0, 15.0;
        std::vector<Vector> mins(3, Vector(2));
        mins[0] << -M_PI, 12.275;
        mins[1] << M_PI, 2.275;
        mins[2] << 9.42478, 2.475;
        return Objective(id, std::move(box), branin, 0.397887, std::move(mins));
    }
    if (id == "michalewicz") {
        // The optimum depends on the dimension; recorded only for d = 2 where
        // a dense-grid value is available (about -1.8013 near (2.20, 1.57)).
        std::optional<double> fstar;
        if (dims == 2) fstar = -1.8013034100;
        return Objective(id, Box::cube(dims, 0.0, M_PI),
                         [](const Vector& x) { return michalewicz(x); }, fstar);
    }
    if (id == "styblinski-tang") {
        const double per_dim = -39.16616570377142;
        std::vector<Vector> mins{Vector::Constant(dims, -2.903534018185960)};
        return Objective(id, Box::cube(dims, -5.0, 5.0), styblinski_tang, per_dim * dims,
                         std::move(mins));
    }
    if (id == "hartmann6") {
        Vector xstar(6);
        xstar << 0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573;
        return Objective(id, Box::cube(6, 0.0, 1.0), hartmann6, -3.32236801, {xstar});
    }
    throw std::invalid_argument("unknown objective '" + id + "'");
}

std::vector<std::string> objective_names() {
    return {"staircase", "branin", "michalewicz", "styblinski-tang", "hartmann6", "interactive"};
}

EmbeddingMap make_embedding(int ambient_dim, int embedded_dim, std::mt19937_64& rng,
                            const Box& ambient_box) {
    if (embedded_dim < 1 || embedded_dim > ambient_dim)
        throw std::invalid_argument("make_embedding: need 1 <= d <= N");
    EmbeddingMap map;
    map.b.resize(embedded_dim, ambient_dim);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < embedded_dim; ++i)
        for (int j = 0; j < ambient_dim; ++j) map.b(i, j) = gauss(rng);
    map.b_pinv = map.b.completeOrthogonalDecomposition().pseudoInverse();
    map.ambient = ambient_box;
    const double half = std::sqrt(static_cast<double>(embedded_dim));
    map.embedded = Box::cube(embedded_dim, -half, half);
    return map;
}

EmbeddingMap identity_embedding(const Box& ambient_box) {
    EmbeddingMap map;
    const int d = ambient_box.dim();
    map.b = Matrix::Identity(d, d);
    map.b_pinv = Matrix::Identity(d, d);
    map.ambient = ambient_box;
    map.embedded = ambient_box;
    return map;
}

Vector lift(const EmbeddingMap& map, const Vector& y) {
    if (y.size() != map.embedded_dim()) throw std::invalid_argument("lift: dimension mismatch");
    return map.ambient.clamp(map.b_pinv * y);
}

double embedded_eval(const EmbeddingMap& map, Objective& f, const Vector& y) {
    return f.evaluate(lift(map, y));
}

Matrix halton_points(int count, int dim, std::uint64_t seed) {
    static const int primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
    if (dim > static_cast<int>(std::size(primes)))
        throw std::invalid_argument("halton_points: dimension too large");
    Matrix pts(count, dim);
    for (int j = 0; j < dim; ++j) {
        const int base = primes[j];
        // one digit permutation per base, fixed by the seed, zero kept at zero
        std::vector<int> perm(base);
        std::iota(perm.begin(), perm.end(), 0);
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(j) + 101));
        std::shuffle(perm.begin() + 1, perm.end(), rng);
        for (int i = 0; i < count; ++i) {
            double value = 0.0, f = 1.0 / base;
            int k = i + 1;
            while (k > 0) {
                value += f * perm[k % base];
                k /= base;
                f /= base;
            }
            pts(i, j) = value;
        }
    }
    return pts;
}

Objective sample_gp_objective(const grammar::CompositeKernelSpec& truth, const Box& domain,
                              int n_anchor, std::mt19937_64& rng, const gp::Hyperparams& hyper) {
    if (n_anchor < 2) throw std::invalid_argument("sample_gp_objective: need at least 2 anchors");
    const int d = domain.dim();
    const Matrix unit = halton_points(n_anchor, d, rng());
    Matrix anchors(n_anchor, d);
    for (int i = 0; i < n_anchor; ++i)
        for (int j = 0; j < d; ++j)
            anchors(i, j) = domain.lo(j) + unit(i, j) * (domain.hi(j) - domain.lo(j));

    constexpr double kJitter = 1e-8;
    Matrix k = gp::covariance(truth, anchors, hyper);
    k.diagonal().array() += kJitter;
    Eigen::LLT<Matrix> llt(k);
    if (llt.info() != Eigen::Success)
        throw NumericalError("sample_gp_objective: prior factorization failed");
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vector xi(n_anchor);
    for (int i = 0; i < n_anchor; ++i) xi(i) = gauss(rng);
    const Vector values = llt.matrixL() * xi;
    const Vector alpha = llt.solve(values);

    auto evaluator = [truth, hyper, anchors, alpha](const Vector& x) {
        double mean = 0.0;
        for (Eigen::Index i = 0; i < anchors.rows(); ++i) {
            double kxi = gp::composite_eval(truth, x, anchors.row(i), hyper);
            if ((x - anchors.row(i).transpose()).squaredNorm() == 0.0) kxi += kJitter;
            mean += kxi * alpha(i);
        }
        return mean;
    };
    return Objective("gp-sample", domain, evaluator);
}

std::pair<Vector, Vector> load_series(std::istream& is) {
    std::vector<std::pair<double, double>> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        std::string trimmed = line;
        trimmed.erase(0, trimmed.find_first_not_of(" \t\r"));
        if (trimmed.empty()) continue;
        std::replace(trimmed.begin(), trimmed.end(), ',', ' ');
        std::istringstream cells(trimmed);
        double t = 0, v = 0;
        if (!(cells >> t >> v)) {
            if (line_no == 1 && rows.empty()) continue;  // header
            throw ParseError("load_series: non-numeric cell", line_no);
        }
        std::string extra;
        if (cells >> extra) throw ParseError("load_series: too many columns", line_no);
        rows.emplace_back(t, v);
    }
    if (rows.empty()) throw ParseError("load_series: no data rows");
    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    Vector t(rows.size()), v(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        t(i) = rows[i].first;
        v(i) = rows[i].second;
    }
    return {t, v};
}

std::pair<Vector, Vector> load_series_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ParseError("load_series: cannot open '" + path + "'");
    return load_series(is);
}

double OracleSession::query(const Vector& x, const std::string& note) {
    const int id = next_id_++;
    for (int attempt = 0; attempt < 3; ++attempt) {
        out_ << "QUERY " << id << " ";
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            if (i > 0) out_ << ",";
            out_ << x(i);
        }
        if (!note.empty()) out_ << " " << note;
        out_ << "\n" << std::flush;

        std::string reply;
        if (!std::getline(in_, reply)) throw ProtocolError("oracle session closed");
        try {
            size_t pos = 0;
            const double score = std::stod(reply, &pos);
            while (pos < reply.size() && std::isspace(static_cast<unsigned char>(reply[pos]))) ++pos;
            if (pos == reply.size()) return score;
        } catch (const std::exception&) {
        }
        // malformed: re-prompt
    }
    throw ProtocolError("oracle session: three malformed replies");
}

double interactive_score(OracleSession& session, const Vector& x, const std::string& note) {
    return session.query(x, note);
}

}  // namespace kobo::objectives
