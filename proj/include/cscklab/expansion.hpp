#pragma once

#include "cscklab/geometry.hpp"
#include "cscklab/operators.hpp"

namespace cscklab {

/// default dyadic parameter list {32, 64, 128, 256}
inline Vec dyadic_rlist(int count = 4, double r0 = 32.0) {
    Vec r(count);
    for (int i = 0; i < count; ++i) r[i] = r0 * std::pow(2.0, i);
    return r;
}

inline Vec logspaced_rlist(double lo, double hi, int count) {
    Vec r(count);
    for (int i = 0; i < count; ++i)
        r[i] = lo * std::pow(hi / lo, double(i) / (count - 1));
    return r;
}

/// Pointwise least-squares fit of field samples against powers of 1/r.
/// The basis is rescaled to [x_min/x_max, 1] for conditioning; coefficients
/// are returned in unscaled 1/r powers, lowest first.
struct SeriesFit {
    Mat coef;          // n × (deg+1)
    double fit_residual = 0.0;
    double condition = 0.0;

    Vec coefficient(int k) const { return coef.col(k).array(); }
};

inline SeriesFit fit_series(const Mat& samples, const Vec& rlist, int deg) {
    int m = int(rlist.size());
    require(m >= deg + 1, "fit_series: need at least deg+1 parameter samples");
    Vec x = rlist.inverse();
    double xmax = x.maxCoeff();
    Mat V(m, deg + 1);
    for (int i = 0; i < m; ++i) {
        double p = 1.0;
        for (int j = 0; j <= deg; ++j) {
            V(i, j) = p;
            p *= x[i] / xmax;
        }
    }
    Eigen::JacobiSVD<Mat> svd(V, Eigen::ComputeThinU | Eigen::ComputeThinV);
    SeriesFit out;
    out.condition = svd.singularValues()(0) / svd.singularValues()(deg);
    if (out.condition > 1e12)
        throw NumericalError("fit_series: parameter range too narrow for the requested order");
    Mat sols = svd.solve(samples.transpose());  // (deg+1) × n
    out.coef = sols.transpose();
    out.fit_residual = (V * sols - samples.transpose()).cwiseAbs().maxCoeff();
    for (int j = 0; j <= deg; ++j) out.coef.col(j) /= std::pow(xmax, j);
    return out;
}

/// fibrewise scalar curvature of the surface's fibre metric family
inline Vec fibrewise_scal(const KahlerSurface& s) {
    const ProductGrid& g = s.g();
    CMat vv = g.as_matrix(ProductGrid::complexify(s.omega0.vv));
    Vec out(g.size());
    for (int pb = 0; pb < g.base_size(); ++pb)
        out.segment(Eigen::Index(pb) * g.fibre_size(), g.fibre_size()) =
            scal_curve(g.fibre(), vv.col(pb).real());
    return out;
}

/// the fibrewise fourth-order operator Δ'_V² - Scal(Ω_σ)·Δ'_V
inline Vec fibre_operator_apply(const KahlerSurface& s, const Vec& phi) {
    Vec lv = vertical_laplacian(s, phi);
    return vertical_laplacian(s, lv) - fibrewise_scal(s) * lv;
}

/// D_Σ(f) = Δ_Σ²f - (Scal(Ω_Σ) + π_Ση)·Δ_Σf on base fields
inline Vec base_operator_apply(const KahlerSurface& s, const Vec& f_base) {
    const Factor& fb = s.g().base();
    auto [xi, eta] = compute_xi_eta(s);
    Vec pi_eta = s.g().fibrewise_mean(eta, s.omega0.vv);
    Vec lap = fb.lap(f_base) / s.sigma;
    return fb.lap(lap) / s.sigma - (scal_curve(fb, s.sigma) + pi_eta) * lap;
}

/// r-sweep verification of the operator expansion
///   L(Ω_r) = (Δ'_V² - Scal(Ω_σ)Δ'_V) + r⁻¹D₁ + r⁻²D₂ + O(r⁻³)
/// applied to a test potential; for base pullbacks D₁ vanishes and the
/// fibrewise mean of D₂ is the base operator D_Σ.
struct OperatorExpansionReport {
    Vec e0, e1, e2;       // fitted coefficient fields
    Vec e0_expected;      // fibrewise operator applied to the potential
    Vec pi_e2;            // base field: fibrewise mean of e2
    Vec d_sigma;          // base field: D_Σ applied (base inputs only)
    double scale = 0.0;   // characteristic size of the leading content
    double e0_err = 0.0;  // sup|e0 - expected|
    double e1_norm = 0.0; // sup|e1|
    double d2_err = 0.0;  // sup|π_Σe2 - D_Σf| (base inputs only)
    double fit_residual = 0.0;
    bool base_input = false;
};

inline OperatorExpansionReport expansion_operator_check(const KahlerSurface& s, const Vec& phi,
                                                        const Vec& rlist, bool base_input) {
    require(rlist.size() >= 4, "expansion_operator_check: need at least 4 parameter values");
    const ProductGrid& g = s.g();
    Mat samples(g.size(), rlist.size());
    for (int i = 0; i < rlist.size(); ++i) {
        LinearOperatorHandle L = linearize_scal(g, assemble_omega_r(s, rlist[i]));
        samples.col(i) = L.apply(phi).matrix();
    }
    int deg = std::min<int>(4, int(rlist.size()) - 1);
    SeriesFit fit = fit_series(samples, rlist, deg);

    OperatorExpansionReport rep;
    rep.base_input = base_input;
    rep.e0 = fit.coefficient(0);
    rep.e1 = fit.coefficient(1);
    rep.e2 = fit.coefficient(2);
    rep.fit_residual = fit.fit_residual;
    rep.e0_expected = fibre_operator_apply(s, phi);
    rep.e0_err = (rep.e0 - rep.e0_expected).abs().maxCoeff();
    rep.e1_norm = rep.e1.abs().maxCoeff();
    rep.pi_e2 = g.fibrewise_mean(rep.e2, s.omega0.vv);
    if (base_input) {
        Vec f_base = g.fibrewise_mean(phi, s.omega0.vv);
        rep.d_sigma = base_operator_apply(s, f_base);
        rep.d2_err = (rep.pi_e2 - rep.d_sigma).abs().maxCoeff();
        rep.scale = rep.d_sigma.abs().maxCoeff();
    } else {
        rep.scale = rep.e0_expected.abs().maxCoeff();
    }
    return rep;
}

}  // namespace cscklab
