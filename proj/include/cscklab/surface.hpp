#pragma once

#include "cscklab/grid.hpp"

#include <memory>

namespace cscklab {

/// Geometric state of the fibration: a closed reference piece ω₀ whose
/// fibrewise restriction is the family of fibre metrics, the base form
/// density σ (ω_Σ = σ·ω_ref_base), the splitting induced by ω₀, and the
/// horizontal coefficient θ = (split-hh of ω₀)/σ.
///
/// Canonical surfaces have fibrewise constant scalar curvature s0 and
/// ω₀ = -iF_V; general-fibre-metric surfaces reuse the same fields, with
/// theta playing the role of ξ.
struct KahlerSurface {
    std::shared_ptr<const ProductGrid> grid;
    Form11 omega0;
    Vec sigma;        // base-indexed density of ω_Σ
    Splitting splitting;
    Vec theta;        // 4D field (ξ for non-canonical surfaces)
    Vec psi;          // perturbation potential, enters the family at weight 1/r
    Vec psi2;         // second perturbation potential, weight 1/r²
    bool canonical = false;
    double s0 = 0.0;  // fibre curvature constant when canonical
    double base_constant = 0.0;  // achieved constant of the base equation

    const ProductGrid& g() const { return *grid; }
    /// density field of ω_Σ pulled back to the product
    Vec sigma4() const { return grid->pullback_base(sigma); }
    /// fibre metric density (the family ω_σ)
    const Vec& fibre_metric() const { return omega0.vv; }

    double theta_threshold() const { return -theta.minCoeff(); }
    bool perturbed() const {
        return (psi.size() > 0 && psi.abs().maxCoeff() > 0) ||
               (psi2.size() > 0 && psi2.abs().maxCoeff() > 0);
    }
};

/// reference Ricci form of the product (both factor references)
inline Form11 reference_ricci(const ProductGrid& g) {
    return Form11(g.pullback_fibre(g.fibre().scal_ref()), CVec::Zero(g.size()),
                  g.pullback_base(g.base().scal_ref()));
}

/// ω_r = ω₀ + r·π*ω_Σ. Positivity is pointwise-equivalent to r > -inf θ.
inline Form11 assemble_omega_r(const KahlerSurface& s, double r) {
    double thr = s.theta_threshold();
    if (!(r > thr))
        throw InputError("assemble_omega_r: form not positive, need r > " + std::to_string(thr));
    Form11 out = s.omega0;
    out.hh += r * s.sigma4();
    return out;
}

/// The surface's r-family: ω_r plus the perturbation potentials at adiabatic
/// weights, ω_r + i∂̄∂(ψ/r + ψ₂/r²). Stays in the class κ_r for every r.
inline Form11 family_form(const KahlerSurface& s, double r) {
    Form11 out = assemble_omega_r(s, r);
    if (s.perturbed()) {
        Vec pot = Vec::Zero(s.g().size());
        if (s.psi.size() > 0) pot += s.psi / r;
        if (s.psi2.size() > 0) pot += s.psi2 / (r * r);
        out = out + s.g().i_del_delbar(pot);
        require(s.g().positive(out), "family_form: perturbation breaks positivity at r = " +
                                         std::to_string(r));
    }
    return out;
}

/// ρ(ω) = ρ_ref + i∂̄∂ log(ω²/ref volume); gauge independent.
inline Form11 ricci_form(const ProductGrid& g, const Form11& omega) {
    require(g.positive(omega), "ricci_form: form is not positive");
    Vec logdet = ProductGrid::det_ratio(omega).log();
    return reference_ricci(g) + g.i_del_delbar(logdet);
}

/// Scal(ω) = Λ_ω ρ(ω)  (= 2ρ∧ω/ω² in complex dimension 2)
inline Vec scal(const ProductGrid& g, const Form11& omega) {
    return ProductGrid::trace_against(ricci_form(g, omega), omega);
}

/// curve scalar curvature of a factor metric v·ω_ref
inline Vec scal_curve(const Factor& f, const Vec& v) {
    require((v > 0.0).all(), "scal_curve: metric density must be positive");
    return (f.scal_ref() + f.lap(v.log())) / v;
}

/// (Δ_V φ)·ω_σ = (i∂̄∂φ)_VV
inline Vec vertical_laplacian(const KahlerSurface& s, const Vec& phi) {
    return s.g().lap_fibre(phi) / s.omega0.vv;
}

/// (Δ_H φ)·ω_Σ = (i∂̄∂φ)_HH in the ω₀-splitting
inline Vec horizontal_laplacian(const KahlerSurface& s, const Vec& phi) {
    SplitForm sf = s.g().split(s.g().i_del_delbar(phi), s.splitting);
    return sf.hh / s.sigma4();
}

/// Laplacian of an arbitrary positive form: Δ_ω φ = Λ_ω i∂̄∂φ
inline Vec laplacian(const ProductGrid& g, const Form11& omega, const Vec& phi) {
    return ProductGrid::trace_against(g.i_del_delbar(phi), omega);
}

struct IntersectionNumbers {
    double A = 0, B = 0, C = 0, D = 0;
    /// mean scalar curvature in the class κ_r: (rC + D)/(rA + B)
    double mean_scal(double r) const { return (r * C + D) / (r * A + B); }
    double volume(double r) const { return r * A + B; }
};

/// 4-form density of α∧β against the reference volume
inline Vec wedge4(const Form11& a, const Form11& b) {
    return a.vv * b.hh + a.hh * b.vv - 2.0 * (a.vh * b.vh.conjugate()).real();
}

/// A = [ω₀]·[ω_Σ], B = ½[ω₀]², and the curvature pairings entering
/// ∫Scal(ω_r)ω_r²/2 = 2πc₁(X)·[ω_r] = rC + D, i.e. C pairs 2πc₁ with [ω_Σ]
/// and D with [ω₀]. 2πc₁ is represented by the Ricci form of the metric at
/// parameter r_rep; the pairings are representative independent.
inline IntersectionNumbers intersection_numbers(const KahlerSurface& s, double r_rep = 0.0) {
    const ProductGrid& g = s.g();
    if (r_rep <= s.theta_threshold()) r_rep = s.theta_threshold() + 8.0;
    Form11 sig(Vec::Zero(g.size()), CVec::Zero(g.size()), s.sigma4());
    Form11 rho = ricci_form(g, assemble_omega_r(s, r_rep));
    IntersectionNumbers n;
    n.A = g.integrate(wedge4(s.omega0, sig));
    n.B = g.integrate(ProductGrid::det_ratio(s.omega0));
    n.C = g.integrate(wedge4(rho, sig));
    n.D = g.integrate(wedge4(rho, s.omega0));
    return n;
}

// ---- pointwise tensor norms ----

/// |β|²_g = tr(g⁻¹ β g⁻¹ β) for a Hermitian (1,1)-form
inline Vec form_norm2(const Form11& beta, const Form11& g) {
    Vec det = ProductGrid::det_ratio(g);
    // entries of g^{jk̄} in unit frames: [hh, -conj(vh); -vh, vv]/det
    Vec ivv = g.hh / det, ihh = g.vv / det;
    CVec ivh = -g.vh.conjugate() / det;
    // M[j][l] = g^{jk̄} β_{kl̄}; |β|² = tr(M M)
    CVec m11 = ivv * beta.vv + ivh * beta.vh.conjugate();
    CVec m12 = ivv * beta.vh + ivh * beta.hh;
    CVec m21 = ivh.conjugate() * beta.vv + ihh * beta.vh.conjugate();
    CVec m22 = ivh.conjugate() * beta.vh + ihh * beta.hh;
    return (m11 * m11 + 2.0 * m12 * m21 + m22 * m22).real();
}

/// |α|²_g for a (1,0)-form with unit-frame components (af, ab)
inline Vec oneform_norm2(const CVec& af, const CVec& ab, const Form11& g) {
    Vec det = ProductGrid::det_ratio(g);
    Vec ivv = g.hh / det, ihh = g.vv / det;
    CVec ivh = -g.vh.conjugate() / det;
    return (ivv * af.abs2() + ihh * ab.abs2() + 2.0 * (ivh * af * ab.conjugate()).real()).real();
}

/// |ξ|²_g for a (1,0)-vector with unit-frame components
inline Vec vector_norm2(const VectorFieldData& xi, const Form11& g) {
    return (g.vv * xi.v.abs2() + g.hh * xi.h.abs2() + 2.0 * (g.vh * xi.v * xi.h.conjugate()).real()).real();
}

/// sup norm of covariant derivatives of a scalar up to order k (k <= 1 here;
/// higher orders live in norms.hpp on the spectral backend)
inline double norm_C0(const Vec& f) { return f.abs().maxCoeff(); }

inline double norm_C1(const ProductGrid& g, const Form11& omega, const Vec& f) {
    CVec df = g.dz_fibre(ProductGrid::complexify(f));
    CVec db = g.dz_base(ProductGrid::complexify(f));
    Vec grad2 = 2.0 * oneform_norm2(df, db, omega);
    return std::max(norm_C0(f), grad2.sqrt().maxCoeff());
}

inline double norm_L2(const ProductGrid& g, const Form11& omega, const Vec& f) {
    return std::sqrt(g.integrate(f * f, ProductGrid::det_ratio(omega)));
}

}  // namespace cscklab
