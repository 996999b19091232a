#include "kobo/kernel_grammar.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

#include "kobo/gp.hpp"

namespace kobo::grammar {

namespace {
constexpr int kB = gp::kNumBaseKernels;
}

int KernelCode::group_degree(int group) const {
    int d = 0;
    for (int b = 0; b < kB; ++b) d += at(group, b);
    return d;
}

bool KernelCode::is_zero() const {
    return std::all_of(exponents.begin(), exponents.end(), [](int e) { return e == 0; });
}

void CombinerConfig::validate() const {
    double pb = 0;
    for (double p : base_probs) {
        if (p < 0) throw std::invalid_argument("CombinerConfig: negative base probability");
        pb += p;
    }
    const double po = p_add + p_multiply + p_end;
    if (std::abs(pb - 1.0) > 1e-9 || std::abs(po - 1.0) > 1e-9)
        throw std::invalid_argument("CombinerConfig: probabilities must sum to 1");
    if (p_add < 0 || p_multiply < 0 || p_end < 0)
        throw std::invalid_argument("CombinerConfig: negative operator probability");
    if (max_degree < 1) throw std::invalid_argument("CombinerConfig: max_degree must be >= 1");
    if (max_groups < 1) throw std::invalid_argument("CombinerConfig: max_groups must be >= 1");
    if (dataset_size < 1) throw std::invalid_argument("CombinerConfig: dataset_size must be >= 1");
}

KernelCode encode(const CompositeKernelSpec& spec, int max_groups, int max_degree) {
    if (spec.terms.empty()) throw InvalidCodeError("encode: spec has no terms");
    if (static_cast<int>(spec.terms.size()) > max_groups)
        throw CapacityError("encode: composition has more product terms than groups");
    KernelCode code(std::vector<int>(static_cast<size_t>(max_groups) * kB, 0));
    for (size_t t = 0; t < spec.terms.size(); ++t) {
        const auto& term = spec.terms[t];
        if (term.factors.empty()) throw InvalidCodeError("encode: empty product term");
        int degree = 0;
        for (const auto& [id, e] : term.factors) {
            if (e <= 0) throw InvalidCodeError("encode: non-positive exponent");
            degree += e;
            code.exponents[t * kB + static_cast<size_t>(id)] = e;
        }
        if (degree > max_degree) throw CapacityError("encode: term degree exceeds bound");
    }
    return canonicalize(std::move(code));
}

CompositeKernelSpec decode(const KernelCode& code) {
    if (code.is_zero()) throw InvalidCodeError("decode: all-zero code is not a kernel");
    CompositeKernelSpec spec;
    for (int g = 0; g < code.groups(); ++g) {
        CompositeKernelSpec::Term term;
        for (int b = 0; b < kB; ++b) {
            const int e = code.at(g, b);
            if (e < 0) throw InvalidCodeError("decode: negative exponent");
            if (e > 0) term.factors[static_cast<gp::BaseKernel>(b)] = e;
        }
        if (!term.factors.empty()) spec.terms.push_back(std::move(term));
    }
    return spec;
}

KernelCode canonicalize(KernelCode code) {
    const int g = code.groups();
    std::vector<std::vector<int>> groups(g);
    for (int i = 0; i < g; ++i)
        groups[i].assign(code.exponents.begin() + i * kB, code.exponents.begin() + (i + 1) * kB);
    std::sort(groups.begin(), groups.end(), std::greater<>());
    for (int i = 0; i < g; ++i)
        std::copy(groups[i].begin(), groups[i].end(), code.exponents.begin() + i * kB);
    return code;
}

bool is_valid(const KernelCode& code, int max_degree) {
    if (code.length() == 0 || code.length() % kB != 0) return false;
    if (code.is_zero()) return false;
    for (int e : code.exponents)
        if (e < 0 || e > max_degree) return false;
    for (int g = 0; g < code.groups(); ++g)
        if (code.group_degree(g) > max_degree) return false;
    return true;
}

namespace {

int draw_index(std::mt19937_64& rng, const double* probs, int n) {
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    for (int i = 0; i < n; ++i) {
        u -= probs[i];
        if (u < 0) return i;
    }
    return n - 1;
}

}  // namespace

KernelCode sample_kernel(std::mt19937_64& rng, const CombinerConfig& cfg) {
    cfg.validate();
    KernelCode code(std::vector<int>(static_cast<size_t>(cfg.max_groups) * kB, 0));
    int group = 0;
    const int first = draw_index(rng, cfg.base_probs.data(), kB);
    code.exponents[static_cast<size_t>(first)] = 1;

    const double op_probs[3] = {cfg.p_add, cfg.p_multiply, cfg.p_end};
    int retries = 0;
    while (true) {
        const int op = draw_index(rng, op_probs, 3);
        if (op == 2) break;  // end
        if (op == 1) {       // multiply: one more factor in the current group
            if (code.group_degree(group) >= cfg.max_degree) {
                if (++retries > cfg.retry_cap)
                    throw std::runtime_error("sample_kernel: retry cap exceeded");
                continue;
            }
            const int b = draw_index(rng, cfg.base_probs.data(), kB);
            ++code.exponents[static_cast<size_t>(group) * kB + b];
        } else {  // add: open a new group
            if (group + 1 >= cfg.max_groups) {
                if (++retries > cfg.retry_cap)
                    throw std::runtime_error("sample_kernel: retry cap exceeded");
                continue;
            }
            ++group;
            const int b = draw_index(rng, cfg.base_probs.data(), kB);
            code.exponents[static_cast<size_t>(group) * kB + b] = 1;
        }
        retries = 0;
    }
    return canonicalize(std::move(code));
}

std::vector<KernelCode> sample_dataset(std::mt19937_64& rng, const CombinerConfig& cfg) {
    cfg.validate();
    std::set<KernelCode> seen;
    std::vector<KernelCode> out;
    out.reserve(static_cast<size_t>(cfg.dataset_size));
    // Distinct draws; the cap guards against dataset_size exceeding the code space.
    long long attempts = 0;
    const long long max_attempts = 200LL * cfg.dataset_size + 10000;
    while (static_cast<int>(out.size()) < cfg.dataset_size) {
        if (++attempts > max_attempts)
            throw std::runtime_error("sample_dataset: could not draw enough distinct codes");
        KernelCode c = sample_kernel(rng, cfg);
        if (seen.insert(c).second) out.push_back(std::move(c));
    }
    return out;
}

Vector data_representation(const KernelCode& code, const Matrix& X, const gp::Hyperparams& hyper) {
    if (X.rows() < 1) throw std::invalid_argument("data_representation: needs at least one observation");
    const CompositeKernelSpec spec = decode(code);
    const Matrix mc = gp::covariance(spec, X, hyper);
    Vector rd(kB);
    for (int b = 0; b < kB; ++b) {
        CompositeKernelSpec base;
        base.terms.push_back({{{static_cast<gp::BaseKernel>(b), 1}}});
        const Matrix mb = gp::covariance(base, X, hyper);
        rd(b) = (mc - mb).norm();
    }
    return rd;
}

KernelRepresentation representation(const KernelCode& code, const Matrix& X,
                                    const gp::Hyperparams& hyper) {
    KernelRepresentation rep;
    rep.code_part = Vector(code.length());
    for (int i = 0; i < code.length(); ++i) rep.code_part(i) = code.exponents[i];
    rep.data_part = data_representation(code, X, hyper);

    const CompositeKernelSpec spec = decode(code);
    const Matrix mc = gp::covariance(spec, X, hyper);
    const double scale = static_cast<double>(X.rows()) *
                         std::max(1.0, mc.array().abs().mean());
    rep.data_part /= scale;
    return rep;
}

std::vector<int> one_hot_encode(const CompositeKernelSpec& spec, int base_slots) {
    if (spec.terms.empty()) throw InvalidCodeError("one_hot_encode: spec has no terms");
    // Flatten the composition to a token sequence: base (op base)*.
    std::vector<int> bases;
    std::vector<int> ops;  // 0 = add, 1 = multiply
    for (size_t t = 0; t < spec.terms.size(); ++t) {
        bool first_factor = true;
        for (const auto& [id, e] : spec.terms[t].factors) {
            for (int rep = 0; rep < e; ++rep) {
                if (!bases.empty()) ops.push_back(first_factor && rep == 0 && t > 0 ? 0 : 1);
                bases.push_back(static_cast<int>(id));
                first_factor = false;
            }
        }
    }
    if (static_cast<int>(bases.size()) > base_slots)
        throw CapacityError("one_hot_encode: composition exceeds token slots");

    std::vector<int> bits(static_cast<size_t>(base_slots) * 5 + (base_slots - 1) * 3, 0);
    size_t pos = 0;
    for (int slot = 0; slot < base_slots; ++slot) {
        if (slot < static_cast<int>(bases.size()))
            bits[pos + (4 - static_cast<size_t>(bases[slot]))] = 1;  // A = 00001
        pos += 5;
        if (slot < base_slots - 1) {
            if (slot < static_cast<int>(ops.size()))
                bits[pos + (ops[slot] == 0 ? 2 : 1)] = 1;  // add = 001, multiply = 010
            pos += 3;
        }
    }
    return bits;
}

CompositeKernelSpec nearest_valid_onehot(const Vector& bits, int base_slots, int max_groups,
                                         int max_degree) {
    const int expected = base_slots * 5 + (base_slots - 1) * 3;
    if (bits.size() < expected)
        throw std::invalid_argument("nearest_valid_onehot: vector too short");

    CompositeKernelSpec spec;
    CompositeKernelSpec::Term term;
    int pos = 0;
    bool pending_add = false;
    for (int slot = 0; slot < base_slots; ++slot) {
        int best = 0;
        for (int j = 1; j < 5; ++j)
            if (bits(pos + j) > bits(pos + best)) best = j;
        const bool active = bits(pos + best) >= 0.5;
        pos += 5;
        if (!active) break;
        const auto id = static_cast<gp::BaseKernel>(4 - best);

        if (pending_add) {
            if (static_cast<int>(spec.terms.size()) + 1 >= max_groups) break;
            spec.terms.push_back(term);
            term = {};
        }
        if (term.degree() < max_degree) term.factors[id] += 1;  // overflow: drop factor

        if (slot == base_slots - 1) break;
        // operator token: add = 001, multiply = 010; anything else ends.
        const double add_v = bits(pos + 2), mul_v = bits(pos + 1);
        pos += 3;
        if (add_v < 0.5 && mul_v < 0.5) break;
        pending_add = add_v > mul_v;
    }
    if (!term.factors.empty()) spec.terms.push_back(term);
    if (spec.terms.empty()) spec.terms.push_back({{{gp::BaseKernel::SE, 1}}});
    return spec;
}

std::string to_string(const CompositeKernelSpec& spec) {
    std::ostringstream os;
    for (size_t t = 0; t < spec.terms.size(); ++t) {
        if (t > 0) os << " + ";
        bool first = true;
        for (const auto& [id, e] : spec.terms[t].factors) {
            if (!first) os << "*";
            os << gp::base_name(id);
            if (e > 1) os << "^" << e;
            first = false;
        }
    }
    return os.str();
}

std::string to_string(const KernelCode& code) {
    std::ostringstream os;
    os << "[";
    for (int i = 0; i < code.length(); ++i) {
        if (i > 0) os << ",";
        os << code.exponents[i];
    }
    os << "]";
    return os.str();
}

CompositeKernelSpec parse_expression(std::string_view text) {
    CompositeKernelSpec spec;
    CompositeKernelSpec::Term term;
    size_t i = 0;
    auto skip_ws = [&] { while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i; };

    auto parse_factor = [&]() {
        skip_ws();
        size_t start = i;
        while (i < text.size() && std::isalpha(static_cast<unsigned char>(text[i]))) ++i;
        if (start == i) throw ParseError("parse_expression: expected kernel name at position " +
                                         std::to_string(start));
        const auto id = gp::base_from_name(text.substr(start, i - start));
        if (!id) throw ParseError("parse_expression: unknown kernel '" +
                                  std::string(text.substr(start, i - start)) + "'");
        int exp = 1;
        skip_ws();
        if (i < text.size() && text[i] == '^') {
            ++i;
            skip_ws();
            size_t n0 = i;
            while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
            if (n0 == i) throw ParseError("parse_expression: expected exponent after '^'");
            exp = std::stoi(std::string(text.substr(n0, i - n0)));
        }
        term.factors[*id] += exp;
    };

    parse_factor();
    skip_ws();
    while (i < text.size()) {
        const char op = text[i];
        if (op == '*') {
            ++i;
            parse_factor();
        } else if (op == '+') {
            ++i;
            spec.terms.push_back(term);
            term = {};
            parse_factor();
        } else {
            throw ParseError("parse_expression: unexpected character '" + std::string(1, op) + "'");
        }
        skip_ws();
    }
    spec.terms.push_back(term);
    return spec;
}

}  // namespace kobo::grammar
