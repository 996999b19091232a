#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "kobo/common.hpp"

namespace kobo::gp {

/// The five base covariance functions. Alias letters A..E follow the same order.
enum class BaseKernel : int { SE = 0, PER = 1, RQ = 2, MAT = 3, LIN = 4 };

inline constexpr int kNumBaseKernels = 5;
inline constexpr std::array<BaseKernel, kNumBaseKernels> kAllBaseKernels{
    BaseKernel::SE, BaseKernel::PER, BaseKernel::RQ, BaseKernel::MAT, BaseKernel::LIN};

char base_alias(BaseKernel id);                              // 'A'..'E'
std::string base_name(BaseKernel id);                        // "SE".."LIN"
std::optional<BaseKernel> base_from_alias(char alias);
std::optional<BaseKernel> base_from_name(std::string_view name);

/// Hyperparameters shared per base-kernel identifier plus a global noise
/// variance. Fields that a kernel does not use are simply ignored for it.
/// Positive parameters are optimized in log space by gp::fit.
struct Hyperparams {
    struct PerKernel {
        double lengthscale = 1.0;
        double variance = 1.0;
        double period = 1.0;         // PER only
        double alpha = 1.0;          // RQ only
        double offset = 0.0;         // LIN only
        double bias_variance = 1.0;  // LIN only
    };
    std::array<PerKernel, kNumBaseKernels> k{};
    double noise_variance = 1e-4;

    PerKernel& of(BaseKernel id) { return k[static_cast<int>(id)]; }
    const PerKernel& of(BaseKernel id) const { return k[static_cast<int>(id)]; }

    static Hyperparams defaults() { return Hyperparams{}; }
};

/// Evaluate one base kernel at a pair of points.
///   SE : s2 * exp(-r^2 / (2 l^2))
///   PER: s2 * exp(-2 sin^2(pi r / p) / l^2)
///   RQ : s2 * (1 + r^2 / (2 a l^2))^(-a)
///   MAT: nu = 5/2 form
///   LIN: sb2 + s2 * (x - c) . (x' - c)
/// r is the Euclidean distance. Throws std::invalid_argument on dimension mismatch.
double base_kernel_eval(BaseKernel id, const Eigen::Ref<const Vector>& x,
                        const Eigen::Ref<const Vector>& y, const Hyperparams& hyper);

}  // namespace kobo::gp
