#pragma once

#include "cscklab/factor.hpp"

#include <utility>

namespace cscklab {

/// Real scalar field on the product grid, fibre-major flat storage.
using ScalarField = Vec;

/// (1,1)-form on the product, components relative to the reference forms:
///   β = vv·ω_ref_fibre ⊕ vh·(unit mixed frame) ⊕ hh·ω_ref_base,
/// Hermitian by construction (the (2,1̄)-component is conj(vh)).
struct Form11 {
    Vec vv;
    CVec vh;
    Vec hh;

    Form11() = default;
    Form11(Vec v, CVec m, Vec h) : vv(std::move(v)), vh(std::move(m)), hh(std::move(h)) {}
    static Form11 zero(Eigen::Index n) { return {Vec::Zero(n), CVec::Zero(n), Vec::Zero(n)}; }

    Form11 operator+(const Form11& o) const { return {vv + o.vv, vh + o.vh, hh + o.hh}; }
    Form11 operator-(const Form11& o) const { return {vv - o.vv, vh - o.vh, hh - o.hh}; }
    Form11 operator*(double s) const { return {vv * s, vh * s, hh * s}; }
};

/// Section of the (1,0)-tangent bundle: frame components per point.
struct VectorFieldData {
    CVec v;  // vertical
    CVec h;  // horizontal
};

/// Horizontal distribution: per-point coefficient b of the horizontal lift
/// e_H = e_base + b·e_fibre (unit reference frames).
struct Splitting {
    CVec b;
    bool identity = false;
};

/// Split components of a Hermitian form relative to a distribution.
struct SplitForm {
    Vec vv;
    CVec vh;
    Vec hh;
};

class ProductGrid {
  public:
    ProductGrid(FactorPtr fibre, FactorPtr base)
        : fibre_(std::move(fibre)), base_(std::move(base)) {
        nf_ = fibre_->size();
        nb_ = base_->size();
        n_ = nf_ * nb_;
        w4_ = Vec(n_);
        for (int pb = 0; pb < nb_; ++pb)
            w4_.segment(Eigen::Index(pb) * nf_, nf_) = fibre_->weights() * base_->weights()[pb];
    }

    const Factor& fibre() const { return *fibre_; }
    const Factor& base() const { return *base_; }
    FactorPtr fibre_ptr() const { return fibre_; }
    FactorPtr base_ptr() const { return base_; }

    int size() const { return n_; }
    int fibre_size() const { return nf_; }
    int base_size() const { return nb_; }
    /// fibre-major enumeration
    int index(int pf, int pb) const { return pf + nf_ * pb; }
    std::pair<int, int> point(int i) const { return {i % nf_, i / nf_}; }

    /// reference 4-volume weights (fibre ref form ∧ base ref form)
    const Vec& weights4() const { return w4_; }
    double total_ref_volume() const { return fibre_->area() * base_->area(); }

    // ---- lifts of per-factor operators to the product ----

    CMat as_matrix(const CVec& f) const {
        return Eigen::Map<const CMat>(f.data(), nf_, nb_);
    }
    static CVec flatten(const CMat& m) {
        return Eigen::Map<const CVec>(m.data(), m.size());
    }
    static CVec complexify(const Vec& f) { return f.cast<cplx>(); }

    CVec fibre_op(const CVec& f, CMat (Factor::*op)(const CMat&) const) const {
        return flatten((fibre_.get()->*op)(as_matrix(f)));
    }
    CVec base_op(const CVec& f, CMat (Factor::*op)(const CMat&) const) const {
        CMat m = as_matrix(f).transpose();
        m = (base_.get()->*op)(m);
        return flatten(CMat(m.transpose()));
    }

    Vec lap_fibre(const Vec& f) const { return fibre_op(complexify(f), &Factor::lap_cols).real(); }
    Vec lap_base(const Vec& f) const { return base_op(complexify(f), &Factor::lap_cols).real(); }
    CVec dz_fibre(const CVec& f) const { return fibre_op(f, &Factor::dz_cols); }
    CVec dzbar_fibre(const CVec& f) const { return fibre_op(f, &Factor::dzbar_cols); }
    CVec dz_base(const CVec& f) const { return base_op(f, &Factor::dz_cols); }
    CVec dzbar_base(const CVec& f) const { return base_op(f, &Factor::dzbar_cols); }

    // ---- the discrete i∂̄∂ ----

    /// i∂̄∂φ of a real potential, in reference components. Exact-order on the
    /// spectral backend; FEM weak form on meshes.
    Form11 i_del_delbar(const Vec& phi) const {
        require(phi.size() == n_, "i_del_delbar: field size mismatch");
        require(phi.allFinite(), "i_del_delbar: field has non-finite entries");
        Form11 out;
        out.vv = lap_fibre(phi);
        out.hh = lap_base(phi);
        out.vh = -dz_fibre(dzbar_base(complexify(phi)));
        return out;
    }

    // ---- integration and projections ----

    /// ∫ φ · vol, where vol is a density against the reference 4-volume
    double integrate(const Vec& phi, const Vec& vol) const {
        require(phi.size() == n_ && vol.size() == n_, "integrate: size mismatch");
        require((vol >= 0.0).all(), "integrate: negative density entries");
        return (phi * vol * w4_).sum();
    }
    double integrate(const Vec& phi) const { return (phi * w4_).sum(); }

    /// fibrewise mean against the fibre volume density (one value per base point)
    Vec fibrewise_mean(const Vec& phi, const Vec& fibre_vol) const {
        require((fibre_vol > 0.0).all(), "fibrewise_mean: fibre volumes must be positive");
        CMat num = as_matrix(complexify(phi * fibre_vol));
        CMat den = as_matrix(complexify(fibre_vol));
        const Vec& wf = fibre_->weights();
        Vec out(nb_);
        for (int pb = 0; pb < nb_; ++pb) {
            double s = (num.col(pb).real().array() * wf).sum();
            double d = (den.col(pb).real().array() * wf).sum();
            out[pb] = s / d;
        }
        return out;
    }

    /// constant-along-fibre extension of a base field
    Vec pullback_base(const Vec& f) const {
        require(f.size() == nb_, "pullback_base: size mismatch");
        Vec out(n_);
        for (int pb = 0; pb < nb_; ++pb) out.segment(Eigen::Index(pb) * nf_, nf_).setConstant(f[pb]);
        return out;
    }
    /// constant-along-base extension of a fibre field
    Vec pullback_fibre(const Vec& f) const {
        require(f.size() == nf_, "pullback_fibre: size mismatch");
        Vec out(n_);
        for (int pb = 0; pb < nb_; ++pb) out.segment(Eigen::Index(pb) * nf_, nf_) = f;
        return out;
    }

    /// φ - (fibrewise mean of φ), the projection onto fibrewise-mean-zero fields
    Vec fibre_mean_zero_part(const Vec& phi, const Vec& fibre_vol) const {
        return phi - pullback_base(fibrewise_mean(phi, fibre_vol));
    }

    // ---- splitting ----

    /// Horizontal distribution annihilated by the fibrewise part of ω₀:
    /// ω₀(e_H, ē_V) = 0 gives b = -conj(vh)/vv. Requires vv > 0.
    Splitting declare_splitting(const Form11& omega0) const {
        require(omega0.vv.size() == n_, "declare_splitting: size mismatch");
        if ((omega0.vv <= 0.0).any())
            throw InputError("declare_splitting: fibrewise restriction is not positive");
        Splitting s;
        s.b = -omega0.vh.conjugate() / omega0.vv.cast<cplx>();
        s.identity = (omega0.vh.abs().maxCoeff() == 0.0);
        return s;
    }

    SplitForm split(const Form11& beta, const Splitting& s) const {
        SplitForm out;
        out.vv = beta.vv;
        if (s.identity) {
            out.vh = beta.vh;
            out.hh = beta.hh;
            return out;
        }
        out.vh = beta.vh + s.b.conjugate() * beta.vv.cast<cplx>();
        out.hh = beta.hh + 2.0 * (s.b * beta.vh).real() + s.b.abs2() * beta.vv;
        return out;
    }

    Form11 unsplit(const SplitForm& sf, const Splitting& s) const {
        Form11 out;
        out.vv = sf.vv;
        if (s.identity) {
            out.vh = sf.vh;
            out.hh = sf.hh;
            return out;
        }
        out.vh = sf.vh - s.b.conjugate() * sf.vv.cast<cplx>();
        out.hh = sf.hh - 2.0 * (s.b * out.vh).real() - s.b.abs2() * sf.vv;
        return out;
    }

    // ---- pointwise Hermitian algebra ----

    /// det of the metric matrix relative to the reference volume: the density
    /// of ω²/2 against the reference 4-volume.
    static Vec det_ratio(const Form11& g) { return g.vv * g.hh - g.vh.abs2(); }

    /// trace of β against the positive form ω: Λ_ω β (frame invariant)
    static Vec trace_against(const Form11& beta, const Form11& omega) {
        return (beta.vv * omega.hh + beta.hh * omega.vv - 2.0 * (beta.vh * omega.vh.conjugate()).real()) /
               det_ratio(omega);
    }

    /// 2·(α∧β)/ω² (so trace_against(β,ω) == wedge_pair(β,ω,ω))
    static Vec wedge_pair(const Form11& alpha, const Form11& beta, const Form11& omega) {
        return (alpha.vv * beta.hh + alpha.hh * beta.vv - 2.0 * (alpha.vh * beta.vh.conjugate()).real()) /
               det_ratio(omega);
    }

    /// volume of X against ω: ∫ ω²/2
    double volume(const Form11& omega) const { return integrate(det_ratio(omega)); }

    bool positive(const Form11& g) const {
        return (g.vv > 0.0).all() && (det_ratio(g) > 0.0).all();
    }

    // ---- closedness residual ----

    /// L²-type norm of the discrete exterior derivative of β (the (2,1) part;
    /// the (1,2) part is its conjugate). Exact zero on i∂̄∂-built forms on the
    /// spectral backend.
    double closedness_residual(const Form11& beta) const {
        CVec r1 = dz_fibre(beta.vh.conjugate()) - dz_base(complexify(beta.vv));
        CVec r2 = dz_fibre(complexify(beta.hh)) - dz_base(beta.vh);
        double s = ((r1.abs2() + r2.abs2()) * w4_).sum();
        return std::sqrt(s);
    }

  private:
    FactorPtr fibre_, base_;
    int nf_ = 0, nb_ = 0, n_ = 0;
    Vec w4_;
};

inline ProductGrid make_product_grid(FactorPtr fibre, FactorPtr base) {
    return ProductGrid(std::move(fibre), std::move(base));
}

}  // namespace cscklab
