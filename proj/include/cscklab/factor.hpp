#pragma once

#include "cscklab/core.hpp"

#include <memory>
#include <string>

namespace cscklab {

/// One discretized curve factor (fibre or base) of the product 4-manifold.
///
/// Everything downstream speaks in densities relative to the factor's
/// reference Kahler form: the reference itself is (1), its area element is
/// weights(), and i∂̄∂φ has density lap(φ) against it. First derivatives are
/// taken against unit-length frames so that mixed components of (1,1)-forms
/// stay invariant under the per-point frame choice.
///
/// Sign convention: lap() is one half of the positive Laplace-Beltrami
/// operator, i.e. the trace of i∂̄∂φ against the reference form, with
/// positive spectrum. On a flat unit square torus λ₁ = 2π².
class Factor {
  public:
    virtual ~Factor() = default;

    virtual int size() const = 0;
    virtual double area() const = 0;
    /// vertex quadrature weights; sum equals area()
    virtual const Vec& weights() const = 0;
    /// discrete scalar curvature of the reference form
    virtual const Vec& scal_ref() const = 0;
    virtual int genus() const = 0;
    virtual std::string kind() const = 0;

    // --- vertex-valued calculus, applied to each column of an n x m matrix ---
    virtual CMat lap_cols(const CMat& f) const = 0;
    virtual CMat dz_cols(const CMat& f) const = 0;
    virtual CMat dzbar_cols(const CMat& f) const = 0;
    /// adjoints w.r.t. the weighted inner product Σ w_i u_i conj(v_i)
    virtual CMat dz_adj_cols(const CMat& f) const = 0;
    virtual CMat dzbar_adj_cols(const CMat& f) const = 0;

    // --- form-point-valued first derivatives (quadratic forms / residuals) ---
    // On meshes these are per-triangle P1 derivatives; on tori they coincide
    // with the vertex-valued ones. They carry no averaging null modes.
    virtual int form_size() const = 0;
    virtual const Vec& form_weights() const = 0;
    virtual CMat dz_form_cols(const CMat& f) const = 0;
    virtual CMat dzbar_form_cols(const CMat& f) const = 0;
    virtual CMat dz_form_adj_cols(const CMat& g) const = 0;
    virtual CMat dzbar_form_adj_cols(const CMat& g) const = 0;
    /// sample a vertex density at the form points
    virtual Vec to_form_space(const Vec& f) const = 0;

    /// ∂̄ on sections of the (1,0)-tangent bundle (frame components in, form
    /// values out) and its adjoint.
    virtual CMat dzbar_T_form_cols(const CMat& xi) const = 0;
    virtual CMat dzbar_T_form_adj_cols(const CMat& g) const = 0;

    // --- eigentransform of lap(), orthonormal against weights() ---
    virtual const Vec& eigenvalues() const = 0;
    virtual CMat to_eig_cols(const CMat& f) const = 0;
    virtual CMat from_eig_cols(const CMat& c) const = 0;

    // real-field conveniences
    Vec lap(const Vec& f) const { return lap_cols(to_cmat(f)).real().col(0); }
    CVec dz(const Vec& f) const { return dz_cols(to_cmat(f)).col(0); }
    CVec dzbar(const Vec& f) const { return dzbar_cols(to_cmat(f)).col(0); }

    double integrate(const Vec& f) const { return (f * weights()).sum(); }
    double mean(const Vec& f) const { return integrate(f) / area(); }

    static CMat to_cmat(const Vec& f) {
        CMat m(f.size(), 1);
        m.col(0) = f.matrix().cast<cplx>();
        return m;
    }
};

using FactorPtr = std::shared_ptr<const Factor>;

}  // namespace cscklab
