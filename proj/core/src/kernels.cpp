#include "kobo/kernels.hpp"

#include <cmath>

namespace kobo::gp {

char base_alias(BaseKernel id) { return static_cast<char>('A' + static_cast<int>(id)); }

std::string base_name(BaseKernel id) {
    switch (id) {
        case BaseKernel::SE: return "SE";
        case BaseKernel::PER: return "PER";
        case BaseKernel::RQ: return "RQ";
        case BaseKernel::MAT: return "MAT";
        case BaseKernel::LIN: return "LIN";
    }
    return "?";
}

std::optional<BaseKernel> base_from_alias(char alias) {
    if (alias >= 'A' && alias <= 'E') return static_cast<BaseKernel>(alias - 'A');
    return std::nullopt;
}

std::optional<BaseKernel> base_from_name(std::string_view name) {
    for (BaseKernel id : kAllBaseKernels)
        if (name == base_name(id)) return id;
    if (name.size() == 1) return base_from_alias(name[0]);
    return std::nullopt;
}

double base_kernel_eval(BaseKernel id, const Eigen::Ref<const Vector>& x,
                        const Eigen::Ref<const Vector>& y, const Hyperparams& hyper) {
    if (x.size() != y.size())
        throw std::invalid_argument("base_kernel_eval: dimension mismatch");
    const auto& h = hyper.of(id);
    const double l = h.lengthscale;
    const double s2 = h.variance;
    switch (id) {
        case BaseKernel::SE: {
            const double r2 = (x - y).squaredNorm();
            return s2 * std::exp(-r2 / (2.0 * l * l));
        }
        case BaseKernel::PER: {
            const double r = (x - y).norm();
            const double s = std::sin(M_PI * r / h.period);
            return s2 * std::exp(-2.0 * s * s / (l * l));
        }
        case BaseKernel::RQ: {
            const double r2 = (x - y).squaredNorm();
            return s2 * std::pow(1.0 + r2 / (2.0 * h.alpha * l * l), -h.alpha);
        }
        case BaseKernel::MAT: {
            const double r = (x - y).norm();
            const double z = std::sqrt(5.0) * r / l;
            return s2 * (1.0 + z + z * z / 3.0) * std::exp(-z);
        }
        case BaseKernel::LIN: {
            const double dot = (x.array() - h.offset).matrix().dot((y.array() - h.offset).matrix());
            return h.bias_variance + s2 * dot;
        }
    }
    return 0.0;
}

}  // namespace kobo::gp
