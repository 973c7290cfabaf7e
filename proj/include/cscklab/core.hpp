#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cscklab {

using Vec  = Eigen::ArrayXd;
using CVec = Eigen::ArrayXcd;
using Mat  = Eigen::MatrixXd;
using CMat = Eigen::MatrixXcd;
using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw InputError(msg);
}

/// Deterministic RNG used everywhere a seed appears. splitmix64 keeps the
/// stream independent of the standard library's distribution internals.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    /// uniform in [0,1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }
    /// uniform in [a,b)
    double uniform(double a, double b) { return a + (b - a) * uniform(); }
    /// standard normal via Box-Muller
    double normal() {
        double u1 = uniform(), u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }
    Vec normal_vec(Eigen::Index n) {
        Vec v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
        return v;
    }

  private:
    std::uint64_t state_;
};

/// Ordinary least squares fit of y against the monomials x^0..x^deg.
/// Returns the deg+1 coefficients, lowest order first.
inline Vec polyfit(const Vec& x, const Vec& y, int deg) {
    require(x.size() == y.size() && x.size() >= deg + 1, "polyfit: need more samples than coefficients");
    Mat V(x.size(), deg + 1);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        double p = 1.0;
        for (int j = 0; j <= deg; ++j) { V(i, j) = p; p *= x[i]; }
    }
    Eigen::VectorXd c = V.colPivHouseholderQr().solve(y.matrix());
    return c.array();
}

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

/// log-log least squares slope of y ~ C * x^slope. Nonpositive samples are a fit failure.
inline SlopeFit loglog_slope(const Vec& x, const Vec& y) {
    require(x.size() == y.size() && x.size() >= 2, "loglog_slope: need at least two samples");
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (!(x[i] > 0.0) || !(y[i] > 0.0))
            throw NumericalError("loglog_slope: nonpositive sample");
    Vec lx = x.log(), ly = y.log();
    double mx = lx.mean(), my = ly.mean();
    double sxx = ((lx - mx) * (lx - mx)).sum();
    double sxy = ((lx - mx) * (ly - my)).sum();
    SlopeFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    Vec pred = f.intercept + f.slope * lx;
    double ss_res = ((ly - pred) * (ly - pred)).sum();
    double ss_tot = ((ly - my) * (ly - my)).sum();
    f.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
    return f;
}

inline double sup_norm(const Vec& v) { return v.abs().maxCoeff(); }

}  // namespace cscklab
