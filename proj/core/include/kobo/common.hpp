#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace kobo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Axis-aligned search box, lo(i) < hi(i) per dimension.
struct Box {
    Vector lo;
    Vector hi;

    int dim() const { return static_cast<int>(lo.size()); }

    bool contains(const Vector& x, double tol = 0.0) const {
        if (x.size() != lo.size()) return false;
        for (int i = 0; i < x.size(); ++i)
            if (x(i) < lo(i) - tol || x(i) > hi(i) + tol) return false;
        return true;
    }

    Vector clamp(Vector x) const {
        for (int i = 0; i < x.size(); ++i)
            x(i) = std::min(std::max(x(i), lo(i)), hi(i));
        return x;
    }

    static Box cube(int d, double lo_v, double hi_v) {
        return Box{Vector::Constant(d, lo_v), Vector::Constant(d, hi_v)};
    }
};

struct CapacityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidCodeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    int line = 0;
    ParseError(const std::string& msg, int line_no)
        : std::runtime_error(msg + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// splitmix64 step; used to derive independent named RNG streams from one seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace kobo
