#pragma once

#include "cscklab/surface.hpp"

#include <functional>
#include <memory>

namespace cscklab {

/// Matrix-free linear map on scalar fields with its exact discrete adjoint
/// relative to the stated L² measure. Adjoint identities hold to roundoff by
/// construction; `symmetric` records whether the operator is self-adjoint
/// (e.g. the scal linearisation on a cscK background).
struct LinearOperatorHandle {
    std::function<Vec(const Vec&)> apply;
    std::function<Vec(const Vec&)> adjoint_apply;
    Vec measure;  // L²(g) weights: det_ratio(ω)·w4
    bool symmetric = false;

    double dot(const Vec& u, const Vec& v) const { return (u * v * measure).sum(); }
    double norm(const Vec& u) const { return std::sqrt(dot(u, u)); }
};

namespace detail {

/// shared state for operators linearized at a fixed Kahler form
struct ScalContext {
    const ProductGrid* grid;
    Form11 omega;
    Form11 rho;
    Vec scal_field;
    Vec det;
    Vec measure;
    // inverse metric entries against unit reference frames: the matrix
    // A[j][k] = g^{jk̄} (= conj(G)^{-1}), with ivh = A[f][b] = -conj(vh)/det
    Vec ivv, ihh;
    CVec ivh;

    ScalContext(const ProductGrid& g, Form11 om) : grid(&g), omega(std::move(om)) {
        require(g.positive(omega), "operator context: form is not positive");
        rho = ricci_form(g, omega);
        scal_field = ProductGrid::trace_against(rho, omega);
        det = ProductGrid::det_ratio(omega);
        measure = det * g.weights4();
        ivv = omega.hh / det;
        ihh = omega.vv / det;
        ivh = -omega.vh.conjugate() / det;
    }

    /// K_β(φ) = 2·(i∂̄∂φ ∧ β)/ω²
    Vec contract(const Vec& phi, const Form11& beta) const {
        return ProductGrid::wedge_pair(grid->i_del_delbar(phi), beta, omega);
    }
    /// exact adjoint of contract(·, β) against the det·w4 measure
    Vec contract_adj(const Vec& chi, const Form11& beta) const {
        const ProductGrid& g = *grid;
        Vec out = g.lap_fibre(beta.hh * chi) + g.lap_base(beta.vv * chi);
        CVec inner = g.fibre_op(ProductGrid::complexify(chi) * beta.vh, &Factor::dz_adj_cols);
        inner = g.base_op(inner, &Factor::dzbar_adj_cols);
        out += 2.0 * inner.real();
        return out / det;
    }
    Vec lap(const Vec& phi) const { return contract(phi, omega); }
    Vec lap_adj(const Vec& chi) const { return contract_adj(chi, omega); }
};

}  // namespace detail

/// Linearisation of the scalar curvature map at ω:
///   L(φ) = Δ²φ - Scal(ω)·Δφ + 2·(i∂̄∂φ ∧ ρ)/ω².
/// This is the exact derivative of the discrete scal() map, so central finite
/// differences converge to it at every background on every backend.
inline LinearOperatorHandle linearize_scal(const ProductGrid& g, const Form11& omega) {
    auto ctx = std::make_shared<detail::ScalContext>(g, omega);
    LinearOperatorHandle h;
    h.measure = ctx->measure;
    double mean = (ctx->scal_field * ctx->measure).sum() / ctx->measure.sum();
    h.symmetric = (ctx->scal_field - mean).abs().maxCoeff() < 1e-9;
    // contract() is 2·(i∂̄∂φ∧β)/ω², which is exactly the n(n-1) = 2 wedge
    // term of the linearisation in complex dimension two
    h.apply = [ctx](const Vec& phi) {
        Vec lap = ctx->lap(phi);
        return Vec(ctx->lap(lap) - ctx->scal_field * lap + ctx->contract(phi, ctx->rho));
    };
    h.adjoint_apply = [ctx](const Vec& chi) {
        Vec t1 = ctx->lap_adj(ctx->lap_adj(chi));
        Vec t2 = ctx->lap_adj(ctx->scal_field * chi);
        return Vec(t1 - t2 + ctx->contract_adj(chi, ctx->rho));
    };
    return h;
}

inline LinearOperatorHandle laplacian_handle(const ProductGrid& g, const Form11& omega) {
    auto ctx = std::make_shared<detail::ScalContext>(g, omega);
    LinearOperatorHandle h;
    h.measure = ctx->measure;
    h.symmetric = true;
    h.apply = [ctx](const Vec& phi) { return ctx->lap(phi); };
    h.adjoint_apply = [ctx](const Vec& chi) { return ctx->lap_adj(chi); };
    return h;
}

/// p(φ) = φ - mean_ω(φ)
inline LinearOperatorHandle mean_zero_projection(const ProductGrid& g, const Form11& omega) {
    Vec m = ProductGrid::det_ratio(omega) * g.weights4();
    double total = m.sum();
    LinearOperatorHandle h;
    h.measure = m;
    h.symmetric = true;
    auto project = [m, total](const Vec& phi) { return Vec(phi - (phi * m).sum() / total); };
    h.apply = project;
    h.adjoint_apply = project;
    return h;
}

inline LinearOperatorHandle compose_projected(const LinearOperatorHandle& p,
                                              const LinearOperatorHandle& L) {
    LinearOperatorHandle h;
    h.measure = L.measure;
    h.symmetric = L.symmetric;
    auto pa = p.apply, la = L.apply, pj = p.adjoint_apply, lj = L.adjoint_apply;
    h.apply = [pa, la](const Vec& x) { return pa(la(x)); };
    h.adjoint_apply = [pj, lj](const Vec& x) { return lj(pj(x)); };
    return h;
}

/// ∇Scal·∇φ: real gradient pairing 2·Re[g^{jk̄}(∂_j Scal)(∂_k̄ φ)]
inline LinearOperatorHandle grad_scal_grad(const ProductGrid& g, const Form11& omega) {
    auto ctx = std::make_shared<detail::ScalContext>(g, omega);
    CVec dsf = g.dz_fibre(ProductGrid::complexify(ctx->scal_field));
    CVec dsb = g.dz_base(ProductGrid::complexify(ctx->scal_field));
    // a_k: coefficient of ∂_k̄φ
    CVec af = ctx->ivv.cast<cplx>() * dsf + ctx->ivh.conjugate() * dsb;
    CVec ab = ctx->ivh * dsf + ctx->ihh.cast<cplx>() * dsb;
    LinearOperatorHandle h;
    h.measure = ctx->measure;
    h.symmetric = false;
    h.apply = [ctx, af, ab](const Vec& phi) {
        const ProductGrid& g = *ctx->grid;
        CVec pf = g.dzbar_fibre(ProductGrid::complexify(phi));
        CVec pb = g.dzbar_base(ProductGrid::complexify(phi));
        return Vec(2.0 * (af * pf + ab * pb).real());
    };
    h.adjoint_apply = [ctx, af, ab](const Vec& chi) {
        const ProductGrid& g = *ctx->grid;
        CVec wf = (ctx->det * chi).cast<cplx>() * af.conjugate();
        CVec wb = (ctx->det * chi).cast<cplx>() * ab.conjugate();
        CVec out = g.fibre_op(wf, &Factor::dzbar_adj_cols) + g.base_op(wb, &Factor::dzbar_adj_cols);
        return Vec(2.0 * out.real() / ctx->det);
    };
    return h;
}

// ---------------------------------------------------------------------------
// 𝒟 = ∂̄∘∇, the ∂̄-operator on tangent sections, and 𝒟*𝒟
// ---------------------------------------------------------------------------

/// ∂̄ on sections of T^{1,0}X as a quadratic form plus the induced
/// self-adjoint operator on vector fields.
///
/// Components live on two staggered grids: the fibre-derivative pair
/// (∂̄_f ξ^f, ∂̄_f ξ^b) on fibre-form × base-vertex points and the base pair
/// on fibre-vertex × base-form points. The tangent index is contracted with
/// the full metric; the form index uses the full inverse metric on spectral
/// grids (where the two staggered grids coincide) and its diagonal blocks on
/// mesh-bearing grids.
class DbarTX {
  public:
    DbarTX(const ProductGrid& g, const Form11& omega)
        : g_(&g), ctx_(std::make_shared<detail::ScalContext>(g, omega)) {
        spectral_ = g.fibre().kind() == "torus" && g.base().kind() == "torus";
        wFf_ = stagger_fibre(Vec::Ones(g.size()), true);
        wFb_ = stagger_base(Vec::Ones(g.size()), true);
        gvv_f_ = stagger_fibre(ctx_->omega.vv, false);
        ghh_f_ = stagger_fibre(ctx_->omega.hh, false);
        gvh_f_ = stagger_fibre_c(ctx_->omega.vh);
        nde_f_ = stagger_fibre(ctx_->ivv * ctx_->det, false);  // N_ff·det = hh
        gvv_b_ = stagger_base(ctx_->omega.vv, false);
        ghh_b_ = stagger_base(ctx_->omega.hh, false);
        gvh_b_ = stagger_base_c(ctx_->omega.vh);
        nde_b_ = stagger_base(ctx_->ihh * ctx_->det, false);  // N_bb·det = vv
    }

    std::shared_ptr<detail::ScalContext> context() const { return ctx_; }
    bool spectral() const { return spectral_; }

    struct Components {
        CVec ff, bf;  // fibre-form × base-vertex
        CVec fb, bb;  // fibre-vertex × base-form
    };

    Components apply(const VectorFieldData& xi) const {
        const ProductGrid& g = *g_;
        Components c;
        c.ff = g.fibre_op(xi.v, &Factor::dzbar_T_form_cols);
        c.bf = g.fibre_op(xi.h, &Factor::dzbar_form_cols);
        c.fb = g.base_op(xi.v, &Factor::dzbar_form_cols);
        c.bb = g.base_op(xi.h, &Factor::dzbar_T_form_cols);
        return c;
    }

    /// (Wc)_{km} = Σ_{jl} G_{jk̄} N_{lm} c_{jl} · det: the weights pairing the
    /// components in the quadratic form Q(ξ,ζ) = Σ Re[(Wc(ξ))·conj(c(ζ))]·W
    Components weighted(const Components& c) const {
        Components w;
        // conj(G) applied over the tangent index, per staggered grid
        auto gbar = [](const Vec& gvv, const Vec& ghh, const CVec& gvh, const CVec& cf,
                       const CVec& cb, CVec& of, CVec& ob) {
            of = gvv.cast<cplx>() * cf + gvh.conjugate() * cb;
            ob = gvh * cf + ghh.cast<cplx>() * cb;
        };
        CVec tf, tb;
        gbar(gvv_f_, ghh_f_, gvh_f_, c.ff, c.bf, tf, tb);
        w.ff = tf * nde_f_.cast<cplx>();
        w.bf = tb * nde_f_.cast<cplx>();
        gbar(gvv_b_, ghh_b_, gvh_b_, c.fb, c.bb, tf, tb);
        w.fb = tf * nde_b_.cast<cplx>();
        w.bb = tb * nde_b_.cast<cplx>();
        if (spectral_) {
            // cross form-index terms: N[b][f]·det = -vh, N[f][b]·det = -conj(vh)
            const CVec& vh = ctx_->omega.vh;
            gbar(ctx_->omega.vv, ctx_->omega.hh, ctx_->omega.vh, c.fb, c.bb, tf, tb);
            w.ff += tf * (-vh);
            w.bf += tb * (-vh);
            gbar(ctx_->omega.vv, ctx_->omega.hh, ctx_->omega.vh, c.ff, c.bf, tf, tb);
            w.fb += tf * (-vh.conjugate());
            w.bb += tb * (-vh.conjugate());
        }
        return w;
    }

    double quad(const VectorFieldData& xi, const VectorFieldData& zeta) const {
        Components cz = apply(zeta);
        Components wx = weighted(apply(xi));
        double s = ((wx.ff * cz.ff.conjugate() + wx.bf * cz.bf.conjugate()).real() * wFf_).sum();
        s += ((wx.fb * cz.fb.conjugate() + wx.bb * cz.bb.conjugate()).real() * wFb_).sum();
        return s;
    }
    double energy(const VectorFieldData& xi) const { return quad(xi, xi); }

    /// B*B: ⟨dbar_laplacian(ξ), ζ⟩_V = Q(ξ, ζ) exactly
    VectorFieldData dbar_laplacian(const VectorFieldData& xi) const {
        const ProductGrid& g = *g_;
        Components w = weighted(apply(xi));
        CVec zv = adj_fibre(w.ff, true) + adj_base(w.fb, false);
        CVec zh = adj_fibre(w.bf, false) + adj_base(w.bb, true);
        // z = det·conj(G)·out, solve pointwise
        CVec d = ctx_->det.cast<cplx>();
        const CVec& gvh = ctx_->omega.vh;
        VectorFieldData out;
        out.v = (ctx_->omega.hh.cast<cplx>() * zv - gvh.conjugate() * zh) / (d * d);
        out.h = (-gvh * zv + ctx_->omega.vv.cast<cplx>() * zh) / (d * d);
        return out;
    }

    /// vector-field L² pairing: Re ∫ G_{jk̄} ξ^j conj(ζ^k) dvol
    double vdot(const VectorFieldData& a, const VectorFieldData& b) const {
        CVec s = ctx_->omega.vv.cast<cplx>() * a.v * b.v.conjugate() +
                 ctx_->omega.vh * a.v * b.h.conjugate() +
                 ctx_->omega.vh.conjugate() * a.h * b.v.conjugate() +
                 ctx_->omega.hh.cast<cplx>() * a.h * b.h.conjugate();
        return (s.real() * ctx_->measure).sum();
    }
    double vnorm(const VectorFieldData& a) const { return std::sqrt(vdot(a, a)); }

  private:
    Vec stagger_fibre(const Vec& f, bool weight) const {
        const ProductGrid& g = *g_;
        CMat m = g.as_matrix(ProductGrid::complexify(f));
        Mat out(g.fibre().form_size(), g.base_size());
        for (int pb = 0; pb < g.base_size(); ++pb)
            out.col(pb) = g.fibre().to_form_space(m.col(pb).real().array()).matrix();
        Vec r = Eigen::Map<Vec>(out.data(), out.size());
        if (weight) {
            const Vec& wf = g.fibre().form_weights();
            for (int pb = 0; pb < g.base_size(); ++pb)
                r.segment(Eigen::Index(pb) * wf.size(), wf.size()) *= wf * g.base().weights()[pb];
        }
        return r;
    }
    CVec stagger_fibre_c(const CVec& f) const {
        return stagger_fibre(f.real(), false).cast<cplx>() +
               cplx(0, 1) * stagger_fibre(f.imag(), false).cast<cplx>();
    }
    Vec stagger_base(const Vec& f, bool weight) const {
        const ProductGrid& g = *g_;
        CMat m = g.as_matrix(ProductGrid::complexify(f)).transpose();
        Mat out(g.base().form_size(), g.fibre_size());
        for (int pf = 0; pf < g.fibre_size(); ++pf)
            out.col(pf) = g.base().to_form_space(m.col(pf).real().array()).matrix();
        Mat t = out.transpose();
        Vec r = Eigen::Map<Vec>(t.data(), t.size());
        if (weight) {
            const Vec& wb = g.base().form_weights();
            const Vec& wf = g.fibre().weights();
            for (int pb = 0; pb < wb.size(); ++pb)
                r.segment(Eigen::Index(pb) * wf.size(), wf.size()) *= wf * wb[pb];
        }
        return r;
    }
    CVec stagger_base_c(const CVec& f) const {
        return stagger_base(f.real(), false).cast<cplx>() +
               cplx(0, 1) * stagger_base(f.imag(), false).cast<cplx>();
    }

    /// weighted adjoints of the component maps (factor adjoints carry the
    /// form/vertex weights; base weights cancel between the two sides)
    CVec adj_fibre(const CVec& y, bool tangent) const {
        const ProductGrid& g = *g_;
        CMat m = Eigen::Map<const CMat>(y.data(), g.fibre().form_size(), g.base_size());
        CMat out = tangent ? g.fibre().dzbar_T_form_adj_cols(m) : g.fibre().dzbar_form_adj_cols(m);
        return ProductGrid::flatten(out);
    }
    CVec adj_base(const CVec& y, bool tangent) const {
        const ProductGrid& g = *g_;
        CMat m = Eigen::Map<const CMat>(y.data(), g.fibre_size(), g.base().form_size());
        CMat t = m.transpose();
        CMat out = tangent ? g.base().dzbar_T_form_adj_cols(t) : g.base().dzbar_form_adj_cols(t);
        return ProductGrid::flatten(CMat(out.transpose()));
    }

    const ProductGrid* g_;
    std::shared_ptr<detail::ScalContext> ctx_;
    bool spectral_ = false;
    Vec wFf_, wFb_;
    Vec gvv_f_, ghh_f_, nde_f_;
    CVec gvh_f_;
    Vec gvv_b_, ghh_b_, nde_b_;
    CVec gvh_b_;
};

/// ∇φ against ω (unit-frame components) and its exact adjoint
struct GradientOp {
    std::shared_ptr<detail::ScalContext> ctx;

    VectorFieldData apply(const Vec& phi) const {
        const ProductGrid& g = *ctx->grid;
        CVec df = g.dzbar_fibre(ProductGrid::complexify(phi));
        CVec db = g.dzbar_base(ProductGrid::complexify(phi));
        VectorFieldData v;
        v.v = ctx->ivv.cast<cplx>() * df + ctx->ivh * db;
        v.h = ctx->ivh.conjugate() * df + ctx->ihh.cast<cplx>() * db;
        return v;
    }
    Vec adjoint(const VectorFieldData& zeta) const {
        const ProductGrid& g = *ctx->grid;
        CVec a = g.fibre_op(ctx->det.cast<cplx>() * zeta.v, &Factor::dzbar_adj_cols) +
                 g.base_op(ctx->det.cast<cplx>() * zeta.h, &Factor::dzbar_adj_cols);
        return a.real() / ctx->det;
    }
};

/// 𝒟*𝒟 = ∇*(∂̄*∂̄)∇: exactly self-adjoint and positive semidefinite, with
/// ⟨𝒟*𝒟φ, φ⟩ = ‖𝒟φ‖² by construction. Kernel is the constants whenever the
/// geometry carries no holomorphic vector fields that are gradients.
class Lichnerowicz {
  public:
    Lichnerowicz(const ProductGrid& g, const Form11& omega)
        : dbar_(std::make_shared<DbarTX>(g, omega)) {
        grad_.ctx = dbar_->context();
    }

    const DbarTX& dbar() const { return *dbar_; }
    const GradientOp& grad() const { return grad_; }

    double dnorm2(const Vec& phi) const { return dbar_->energy(grad_.apply(phi)); }

    LinearOperatorHandle handle() const {
        auto d = dbar_;
        auto gr = grad_;
        LinearOperatorHandle h;
        h.measure = gr.ctx->measure;
        h.symmetric = true;
        auto op = [d, gr](const Vec& phi) {
            return gr.adjoint(d->dbar_laplacian(gr.apply(phi)));
        };
        h.apply = op;
        h.adjoint_apply = op;
        return h;
    }

  private:
    std::shared_ptr<DbarTX> dbar_;
    GradientOp grad_;
};

inline Lichnerowicz make_DstarD(const ProductGrid& g, const Form11& omega) {
    return Lichnerowicz(g, omega);
}

}  // namespace cscklab
