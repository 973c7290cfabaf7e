#pragma once

#include "cscklab/ladder.hpp"
#include "cscklab/solvers.hpp"

namespace cscklab {

/// Riemannian submersion model: fibre metric on vertical vectors, r·ω_Σ on
/// horizontal vectors, no cross term in the ω₀-splitting. Not closed; used
/// as a comparison metric only.
inline Form11 model_metric_h(const KahlerSurface& s, double r) {
    SplitForm sf;
    sf.vv = s.omega0.vv;
    sf.vh = CVec::Zero(s.g().size());
    sf.hh = r * s.sigma4();
    return s.g().unsplit(sf, s.splitting);
}

/// sup-norm comparison ‖g - h‖_{C⁰(h)}
inline double metric_comparison_c0(const ProductGrid& g, const Form11& gr, const Form11& h) {
    Form11 diff = gr - h;
    return form_norm2(diff, h).sqrt().maxCoeff();
}

/// smallest eigenvalue of the Laplacian of ω on mean-zero fields
inline double lambda1_scalar(const ProductGrid& g, const Form11& omega, double r,
                             std::uint64_t seed = 11) {
    LinearOperatorHandle lap = laplacian_handle(g, omega);
    Preconditioner M = product_preconditioner(
        g, [r](double lf, double lb) { return lf + lb / r + 1e-10; });
    EigResult eig = smallest_eigenvalues(lap, 1, seed, {Vec::Ones(g.size())}, 1e-12, &M, 25, 1e-9);
    if (!(eig.values[0] > 0))
        throw NumericalError("lambda1_scalar: eigensolver returned a nonpositive value");
    return eig.values[0];
}

// ---------------------------------------------------------------------------
// vector-field eigenproblem for the ∂̄-Laplacian on T^{1,0}X
// ---------------------------------------------------------------------------

namespace detail {

inline VectorFieldData vf_axpy(double a, const VectorFieldData& x, const VectorFieldData& y) {
    return {a * x.v + y.v, a * x.h + y.h};
}

/// plain CG for the shifted ∂̄-Laplacian on vector fields
inline VectorFieldData vf_cg(const DbarTX& db, double shift, const VectorFieldData& b, int max_iter,
                             double rel_tol) {
    VectorFieldData x{CVec::Zero(b.v.size()), CVec::Zero(b.h.size())};
    auto A = [&](const VectorFieldData& v) {
        VectorFieldData out = db.dbar_laplacian(v);
        out.v += shift * v.v;
        out.h += shift * v.h;
        return out;
    };
    VectorFieldData rr = b;
    VectorFieldData p = rr;
    double rz = db.vdot(rr, rr);
    double b0 = std::sqrt(rz);
    for (int it = 0; it < max_iter && b0 > 0; ++it) {
        VectorFieldData Ap = A(p);
        double pAp = db.vdot(p, Ap);
        if (!(pAp > 0)) break;
        double alpha = rz / pAp;
        x = vf_axpy(alpha, p, x);
        rr = vf_axpy(-alpha, Ap, rr);
        double rn = db.vdot(rr, rr);
        if (std::sqrt(rn) < rel_tol * b0) break;
        p = vf_axpy(rn / rz, p, rr);  // p ← r + β p
        rz = rn;
    }
    return x;
}

}  // namespace detail

struct VectorEigResult {
    double smallest = 0.0;
    double second = 0.0;
};

/// two smallest eigenvalues of the ∂̄-Laplacian on tangent sections,
/// block inverse power iteration with fixed seed
inline VectorEigResult dbar_vf_spectrum(const ProductGrid& g, const Form11& omega,
                                        std::uint64_t seed = 13, int iters = 18) {
    DbarTX db(g, omega);
    Rng rng(seed);
    int n = g.size();
    auto randvf = [&]() {
        VectorFieldData v;
        v.v = rng.normal_vec(n).cast<cplx>() + cplx(0, 1) * rng.normal_vec(n).cast<cplx>();
        v.h = rng.normal_vec(n).cast<cplx>() + cplx(0, 1) * rng.normal_vec(n).cast<cplx>();
        return v;
    };
    std::vector<VectorFieldData> X{randvf(), randvf()};
    // scale the shift from an initial Rayleigh quotient
    double r0 = db.energy(X[0]) / db.vdot(X[0], X[0]);
    double shift = 1e-4 * r0;

    Vec vals = Vec::Zero(2);
    for (int it = 0; it < iters; ++it) {
        std::vector<VectorFieldData> Y;
        for (auto& x : X) Y.push_back(detail::vf_cg(db, shift, x, 250, 1e-8));
        // orthonormalize in the vector L²
        for (int i = 0; i < 2; ++i) {
            for (int j = 0; j < i; ++j) Y[i] = detail::vf_axpy(-db.vdot(Y[i], Y[j]), Y[j], Y[i]);
            double nn = std::sqrt(db.vdot(Y[i], Y[i]));
            Y[i].v /= nn;
            Y[i].h /= nn;
        }
        Mat S(2, 2);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) S(i, j) = db.quad(Y[j], Y[i]);
        Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (S + S.transpose()));
        std::vector<VectorFieldData> Z;
        for (int i = 0; i < 2; ++i) {
            VectorFieldData z{CVec::Zero(n), CVec::Zero(n)};
            for (int j = 0; j < 2; ++j) z = detail::vf_axpy(es.eigenvectors()(j, i), Y[j], z);
            Z.push_back(z);
        }
        X = Z;
        Vec nv = es.eigenvalues().array();
        if ((nv - vals).abs().maxCoeff() < 1e-10 * (1.0 + nv.abs().maxCoeff())) {
            vals = nv;
            break;
        }
        vals = nv;
    }
    return {vals[0], vals[1]};
}

/// first eigenvalue of the ∂̄-Laplacian on vector fields; a kernel means the
/// geometry carries holomorphic vector fields and is rejected
inline double lambda1_dbar_vf(const ProductGrid& g, const Form11& omega, std::uint64_t seed = 13) {
    VectorEigResult r = dbar_vf_spectrum(g, omega, seed);
    if (r.smallest < 1e-8 * std::max(1.0, r.second))
        throw InputError(
            "lambda1_dbar_vf: kernel detected — the geometry carries holomorphic vector fields");
    return r.smallest;
}

/// smallest eigenvalues of 𝒟*𝒟; returns (smallest without deflation,
/// first nonzero on the mean-zero complement)
struct LichSpectrum {
    double kernel_value = 0.0;  // should be ~0 (the constants)
    double lambda1 = 0.0;
};

inline LichSpectrum lambda1_DstarD(const ProductGrid& g, const Form11& omega, double r,
                                   std::uint64_t seed = 17) {
    Lichnerowicz lich(g, omega);
    LinearOperatorHandle h = lich.handle();
    Preconditioner M = product_preconditioner(g, [r](double lf, double lb) {
        double mu = lf + lb / r;
        return mu * mu + mu + 1e-10;
    });
    LichSpectrum out;
    EigResult with_const = smallest_eigenvalues(h, 1, seed, {}, 1e-12, &M, 8, 1e-9);
    out.kernel_value = with_const.values[0];
    EigResult defl =
        smallest_eigenvalues(h, 1, seed + 1, {Vec::Ones(g.size())}, 1e-12, &M, 25, 1e-9);
    out.lambda1 = defl.values[0];
    return out;
}

/// ‖P_r‖ as 1/λ₁ of the projected linearisation on mean-zero fields, with an
/// iterative-solve cross-check on a random right-hand side
struct InverseNormEstimate {
    double lambda1 = 0.0;
    double norm = 0.0;        // 1/lambda1
    double solve_ratio = 0.0; // ‖P ψ‖/‖ψ‖ for a random mean-zero ψ
};

inline InverseNormEstimate inverse_norm(const ProductGrid& g, const Form11& omega, double r,
                                        std::uint64_t seed = 19) {
    LinearOperatorHandle L = linearize_scal(g, omega);
    LinearOperatorHandle p = mean_zero_projection(g, omega);
    LinearOperatorHandle pL = compose_projected(p, L);
    Preconditioner M = product_preconditioner(g, [r](double lf, double lb) {
        double mu = lf + lb / r;
        return mu * mu + mu + 1e-10;
    });
    InverseNormEstimate out;
    EigResult eig =
        smallest_eigenvalues(pL, 1, seed, {Vec::Ones(g.size())}, 1e-12, &M, 25, 1e-9);
    out.lambda1 = eig.values[0];
    require(out.lambda1 > 0, "inverse_norm: projected linearisation is not positive");
    out.norm = 1.0 / out.lambda1;
    Rng rng(seed + 100);
    Vec psi = p.apply(rng.normal_vec(g.size()));
    Vec x;
    SolveStats st = pcg(pL, psi, x, 1e-10, 500, &M, &p.apply);
    if (st.converged) out.solve_ratio = pL.norm(x) / pL.norm(psi);
    return out;
}

/// geometric-series invertibility transfer: if ‖L - D‖ ≤ (2‖Q‖)⁻¹ then L is
/// invertible with ‖P‖ ≤ 2‖Q‖
struct PerturbationBound {
    double diff_norm = 0.0;   // measured ‖L - D‖
    double threshold = 0.0;   // (2‖Q‖)⁻¹
    bool hypothesis_holds = false;
    double implied_bound = 0.0;  // 2‖Q‖ when the hypothesis holds
    double margin = 0.0;         // diff_norm / threshold
};

inline PerturbationBound perturbation_invertibility(const LinearOperatorHandle& L,
                                                    const LinearOperatorHandle& D, double q_norm,
                                                    std::uint64_t seed = 23) {
    LinearOperatorHandle diff;
    diff.measure = L.measure;
    auto la = L.apply, da = D.apply, lj = L.adjoint_apply, dj = D.adjoint_apply;
    diff.apply = [la, da](const Vec& x) { return Vec(la(x) - da(x)); };
    diff.adjoint_apply = [lj, dj](const Vec& x) { return Vec(lj(x) - dj(x)); };
    PerturbationBound out;
    double pn = power_norm(diff, seed, 20);
    // probe set: random fields give a lower bound that guards the power method
    Rng rng(seed + 7);
    for (int t = 0; t < 6; ++t) {
        Vec x = rng.normal_vec(L.measure.size());
        pn = std::max(pn, diff.norm(diff.apply(x)) / diff.norm(x));
    }
    out.diff_norm = pn;
    out.threshold = 1.0 / (2.0 * q_norm);
    out.margin = out.diff_norm / out.threshold;
    out.hypothesis_holds = out.diff_norm <= out.threshold;
    if (out.hypothesis_holds) out.implied_bound = 2.0 * q_norm;
    return out;
}

// ---------------------------------------------------------------------------
// report over an r-sweep
// ---------------------------------------------------------------------------

struct SpectralReport {
    Vec rlist;
    Vec lambda1_scalar;
    Vec lambda1_dbar;   // NaN where the geometry has holomorphic fields
    Vec lambda1_lich;
    Vec inv_norm;
    SlopeFit scalar_fit, dbar_fit, lich_fit, inv_fit;
    bool dbar_kernel = false;
    bool conclusive = true;  // all fits carry R² >= 0.99

    static SpectralReport run(const LadderState& st, const Vec& rlist, std::uint64_t seed = 29) {
        const KahlerSurface& s = *st.surface;
        const ProductGrid& g = s.g();
        SpectralReport rep;
        rep.rlist = rlist;
        int m = int(rlist.size());
        rep.lambda1_scalar = Vec(m);
        rep.lambda1_dbar = Vec::Constant(m, std::numeric_limits<double>::quiet_NaN());
        rep.lambda1_lich = Vec(m);
        rep.inv_norm = Vec(m);
        for (int i = 0; i < m; ++i) {
            double r = rlist[i];
            Form11 om = ladder_form(st, r);
            rep.lambda1_scalar[i] = cscklab::lambda1_scalar(g, om, r, seed);
            rep.lambda1_lich[i] = lambda1_DstarD(g, om, r, seed).lambda1;
            rep.inv_norm[i] = inverse_norm(g, om, r, seed).norm;
            try {
                rep.lambda1_dbar[i] = lambda1_dbar_vf(g, om, seed);
            } catch (const InputError&) {
                rep.dbar_kernel = true;
            }
        }
        rep.scalar_fit = loglog_slope(rlist, rep.lambda1_scalar);
        rep.lich_fit = loglog_slope(rlist, rep.lambda1_lich);
        rep.inv_fit = loglog_slope(rlist, rep.inv_norm);
        if (!rep.dbar_kernel) rep.dbar_fit = loglog_slope(rlist, rep.lambda1_dbar);
        double r2min = std::min({rep.scalar_fit.r_squared, rep.lich_fit.r_squared,
                                 rep.inv_fit.r_squared,
                                 rep.dbar_kernel ? 1.0 : rep.dbar_fit.r_squared});
        rep.conclusive = r2min >= 0.99;
        return rep;
    }
};

}  // namespace cscklab
