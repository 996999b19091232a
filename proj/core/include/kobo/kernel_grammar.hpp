#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "kobo/kernels.hpp"

namespace kobo::grammar {

/// Integer exponent vector encoding a composite kernel. Entries come in
/// groups of five (one exponent per base kernel, in A..E order); each group
/// is one product term of the composition. Canonical form sorts groups
/// lexicographically non-increasing so that all-zero groups trail.
struct KernelCode {
    std::vector<int> exponents;

    KernelCode() = default;
    explicit KernelCode(std::vector<int> e) : exponents(std::move(e)) {}

    int groups() const { return static_cast<int>(exponents.size()) / gp::kNumBaseKernels; }
    int length() const { return static_cast<int>(exponents.size()); }
    int at(int group, int base) const { return exponents[group * gp::kNumBaseKernels + base]; }
    int group_degree(int group) const;
    bool is_zero() const;

    bool operator==(const KernelCode& other) const { return exponents == other.exponents; }
    bool operator<(const KernelCode& other) const { return exponents < other.exponents; }
};

/// Sum-of-products form: one Term per product group, mapping base kernel to
/// its positive integer exponent. Round-trips with KernelCode.
struct CompositeKernelSpec {
    struct Term {
        std::map<gp::BaseKernel, int> factors;

        int degree() const {
            int d = 0;
            for (const auto& [id, e] : factors) d += e;
            return d;
        }
        bool operator==(const Term& other) const { return factors == other.factors; }
    };
    std::vector<Term> terms;

    bool operator==(const CompositeKernelSpec& other) const { return terms == other.terms; }
};

/// Sampling distributions for the random kernel generator.
struct CombinerConfig {
    std::array<double, gp::kNumBaseKernels> base_probs{0.2, 0.2, 0.2, 0.2, 0.2};
    double p_add = 1.0 / 3.0;
    double p_multiply = 1.0 / 3.0;
    double p_end = 1.0 / 3.0;
    int max_degree = 3;
    int max_groups = 3;
    int dataset_size = 2000;
    int retry_cap = 100;

    void validate() const;
};

/// VAE input: the code entries as reals (r_c) concatenated with normalized
/// Frobenius distances to each base kernel's covariance on the data (r_d).
struct KernelRepresentation {
    Vector code_part;  // length groups*5
    Vector data_part;  // length 5

    Vector full() const {
        Vector r(code_part.size() + data_part.size());
        r << code_part, data_part;
        return r;
    }
};

KernelCode encode(const CompositeKernelSpec& spec, int max_groups = 3, int max_degree = 3);
CompositeKernelSpec decode(const KernelCode& code);
KernelCode canonicalize(KernelCode code);
bool is_valid(const KernelCode& code, int max_degree = 3);

KernelCode sample_kernel(std::mt19937_64& rng, const CombinerConfig& cfg);

/// Draws cfg.dataset_size distinct canonical codes.
std::vector<KernelCode> sample_dataset(std::mt19937_64& rng, const CombinerConfig& cfg);

/// r_d entries: Frobenius distance between the composite's covariance matrix
/// on X and each base kernel's, all under the one shared hyperparameter set.
Vector data_representation(const KernelCode& code, const Matrix& X, const gp::Hyperparams& hyper);

/// Full representation r = [r_c, r_d] with r_d divided by
/// (|X| * max(1, mean |entry of M_C|)) to keep scales comparable across
/// dataset sizes.
KernelRepresentation representation(const KernelCode& code, const Matrix& X,
                                    const gp::Hyperparams& hyper);

/// Token-sequence encoding used by the one-hot ablation: five 5-bit base
/// tokens interleaved with four 3-bit operator tokens (add=001, multiply=010),
/// zero tokens as padding. Bits are stored in written order, so base A is
/// 0,0,0,0,1.
std::vector<int> one_hot_encode(const CompositeKernelSpec& spec, int base_slots = 5);

/// Projects a real-valued one-hot block back to the nearest valid token
/// sequence and returns the spec it describes (ablation plumbing).
CompositeKernelSpec nearest_valid_onehot(const Vector& bits, int base_slots = 5,
                                         int max_groups = 3, int max_degree = 3);

std::string to_string(const CompositeKernelSpec& spec);  // e.g. "SE^2*PER + RQ*MAT"
std::string to_string(const KernelCode& code);           // e.g. "[2,1,0,...]"
CompositeKernelSpec parse_expression(std::string_view text);  // accepts "C+D", "SE*PER + LIN", "A^2*B"

}  // namespace kobo::grammar
