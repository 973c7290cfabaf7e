#pragma once

#include "cscklab/factor.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

namespace cscklab {

namespace detail {

/// Cache of FFTW plans keyed by (ny, nx, howmany, sign). Plans are created
/// with FFTW_ESTIMATE so the algorithm choice (and hence roundoff) is
/// reproducible run to run.
class FftPlans {
  public:
    static FftPlans& instance() {
        static FftPlans p;
        return p;
    }

    void exec(int nx, int ny, int howmany, int sign, cplx* data) {
        fftw_plan plan;
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto key = std::make_tuple(nx, ny, howmany, sign);
            auto it = plans_.find(key);
            if (it == plans_.end()) {
                int n[2] = {ny, nx};
                auto* buf = reinterpret_cast<fftw_complex*>(data);
                plan = fftw_plan_many_dft(2, n, howmany, buf, nullptr, 1, nx * ny,
                                          buf, nullptr, 1, nx * ny, sign,
                                          FFTW_ESTIMATE | FFTW_UNALIGNED);
                plans_.emplace(key, plan);
            } else {
                plan = it->second;
            }
        }
        fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(data),
                         reinterpret_cast<fftw_complex*>(data));
    }

  private:
    FftPlans() = default;
    ~FftPlans() {
        for (auto& [k, p] : plans_) fftw_destroy_plan(p);
    }
    std::mutex mu_;
    std::map<std::tuple<int, int, int, int>, fftw_plan> plans_;
};

}  // namespace detail

/// Flat torus C/(Z + τZ) sampled on a uniform nx x ny grid, derivatives by
/// exact Fourier multipliers. Storage is x-major: index = ix + nx*iy,
/// coordinates (x,y) = (ix/nx, iy/ny), point z = x + τy.
class TorusFactor final : public Factor {
  public:
    TorusFactor(int nx, int ny, cplx tau = cplx(0.0, 1.0), double area = 1.0)
        : nx_(nx), ny_(ny), tau_(tau), area_(area) {
        require(nx >= 8 && ny >= 8, "torus factor: resolution below minimum (need >= 8 per direction)");
        require(nx % 2 == 0 && ny % 2 == 0, "torus factor: grid dimensions must be even");
        require(tau.imag() > 0, "torus factor: modulus must have positive imaginary part");
        require(area > 0, "torus factor: area must be positive");
        n_ = nx * ny;
        gref_ = area_ / (2.0 * tau_.imag());
        weights_ = Vec::Constant(n_, area_ / double(n_));
        scal_ref_ = Vec::Zero(n_);

        mult_lap_ = CVec(n_);
        mult_dz_ = CVec(n_);
        mult_dzbar_ = CVec(n_);
        const double pit = kPi / tau_.imag();
        const double sg = std::sqrt(gref_);
        for (int iy = 0; iy < ny; ++iy) {
            int l = iy <= ny / 2 ? iy : iy - ny;
            for (int ix = 0; ix < nx; ++ix) {
                int k = ix <= nx / 2 ? ix : ix - nx;
                cplx c = pit * (double(l) - std::conj(tau_) * double(k));  // ∂_z symbol
                cplx d = pit * (tau_ * double(k) - double(l));             // ∂_z̄ symbol
                int idx = ix + nx * iy;
                mult_lap_[idx] = -c * d / gref_;
                bool nyq = (nx % 2 == 0 && ix == nx / 2) || (ny % 2 == 0 && iy == ny / 2);
                mult_dz_[idx] = nyq ? cplx(0) : c / sg;
                mult_dzbar_[idx] = nyq ? cplx(0) : d / sg;
            }
        }
        eigenvalues_ = mult_lap_.real();
    }

    int size() const override { return n_; }
    double area() const override { return area_; }
    const Vec& weights() const override { return weights_; }
    const Vec& scal_ref() const override { return scal_ref_; }
    int genus() const override { return 1; }
    std::string kind() const override { return "torus"; }

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    cplx tau() const { return tau_; }

    /// coordinates of sample point i in the unit square chart
    std::pair<double, double> coords(int i) const {
        return {double(i % nx_) / nx_, double(i / nx_) / ny_};
    }

    CMat lap_cols(const CMat& f) const override { return apply(f, mult_lap_); }
    CMat dz_cols(const CMat& f) const override { return apply(f, mult_dz_); }
    CMat dzbar_cols(const CMat& f) const override { return apply(f, mult_dzbar_); }
    CMat dz_adj_cols(const CMat& f) const override { return apply(f, mult_dz_.conjugate()); }
    CMat dzbar_adj_cols(const CMat& f) const override { return apply(f, mult_dzbar_.conjugate()); }

    int form_size() const override { return n_; }
    const Vec& form_weights() const override { return weights_; }
    CMat dz_form_cols(const CMat& f) const override { return dz_cols(f); }
    CMat dzbar_form_cols(const CMat& f) const override { return dzbar_cols(f); }
    CMat dz_form_adj_cols(const CMat& g) const override { return dz_adj_cols(g); }
    CMat dzbar_form_adj_cols(const CMat& g) const override { return dzbar_adj_cols(g); }
    Vec to_form_space(const Vec& f) const override { return f; }
    // the unit frame ∂_z/√gref is globally holomorphic on a torus
    CMat dzbar_T_form_cols(const CMat& xi) const override { return dzbar_cols(xi); }
    CMat dzbar_T_form_adj_cols(const CMat& g) const override { return dzbar_adj_cols(g); }

    const Vec& eigenvalues() const override { return eigenvalues_; }
    CMat to_eig_cols(const CMat& f) const override {
        CMat c = f;
        detail::FftPlans::instance().exec(nx_, ny_, int(c.cols()), FFTW_FORWARD, c.data());
        return c / double(n_);
    }
    CMat from_eig_cols(const CMat& c) const override {
        CMat f = c;
        detail::FftPlans::instance().exec(nx_, ny_, int(f.cols()), FFTW_BACKWARD, f.data());
        return f;
    }

  private:
    CMat apply(const CMat& f, const CVec& mult) const {
        CMat c = f;
        detail::FftPlans::instance().exec(nx_, ny_, int(c.cols()), FFTW_FORWARD, c.data());
        c.array().colwise() *= mult;
        detail::FftPlans::instance().exec(nx_, ny_, int(c.cols()), FFTW_BACKWARD, c.data());
        return c / double(n_);
    }

    int nx_, ny_, n_;
    cplx tau_;
    double area_, gref_;
    Vec weights_, scal_ref_, eigenvalues_;
    CVec mult_lap_, mult_dz_, mult_dzbar_;
};

}  // namespace cscklab
