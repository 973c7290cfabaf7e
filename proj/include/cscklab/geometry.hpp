#pragma once

#include "cscklab/surface.hpp"

#include <Eigen/Dense>

namespace cscklab {

struct UniformizationResult {
    Vec u;             // conformal factor exponent, mean-zero gauge
    double achieved;   // constant curvature of e^{2u}·input
    double residual;   // sup deviation from the constant
    int iterations;
};

namespace detail {

/// dense matrix of the factor Laplacian (small curve problems only)
inline Mat dense_lap(const Factor& f) {
    CMat id = CMat::Identity(f.size(), f.size());
    return f.lap_cols(id).real();
}

}  // namespace detail

/// Solve Scal(e^{2u}·v·ω_ref) = const on one curve factor, mean-zero u.
/// The achieved constant is an output; its sign is pinned by Gauss-Bonnet
/// (0 for genus 1, negative for genus >= 2), and `target` must agree in sign.
/// Modified Newton with a frozen factorization and step-halving damping.
inline UniformizationResult uniformize_fibre(const Factor& f, const Vec& v, double target,
                                             const Mat* lap_dense = nullptr,
                                             const Eigen::LDLT<Mat>* frozen = nullptr) {
    require((v > 0.0).all(), "uniformize_fibre: metric density must be positive");
    const Vec& w = f.weights();
    UniformizationResult out;

    if (f.genus() == 1) {
        require(target == 0.0, "uniformize_fibre: genus-1 factor needs target 0");
        Vec logv = v.log();
        out.u = -0.5 * (logv - (logv * w).sum() / f.area());
        out.achieved = 0.0;
        out.iterations = 0;
        Vec s = scal_curve(f, (2.0 * out.u).exp() * v);
        out.residual = s.abs().maxCoeff();
        return out;
    }

    require(target < 0.0, "uniformize_fibre: genus >= 2 factor needs a negative target");
    Mat lap_local;
    Eigen::LDLT<Mat> solver_local;
    if (!lap_dense) {
        lap_local = detail::dense_lap(f);
        lap_dense = &lap_local;
    }
    if (!frozen) {
        // weighted symmetric form: W·lap is SPD once the -target diagonal is added
        Mat j0 = w.matrix().asDiagonal() * (*lap_dense);
        j0.diagonal() -= (target * v * w).matrix();
        solver_local.compute(0.5 * (j0 + j0.transpose()));
        frozen = &solver_local;
    }

    Vec u = Vec::Zero(f.size());
    double prev = std::numeric_limits<double>::max();
    int it = 0;
    for (; it < 50; ++it) {
        Vec dens = (2.0 * u).exp() * v;
        Vec s = scal_curve(f, dens);
        double c = (s * dens * w).sum() / (dens * w).sum();
        Vec res = s - c;
        double rn = res.abs().maxCoeff();
        if (rn < 1e-11) {
            prev = rn;
            break;
        }
        Vec rhs = -0.5 * dens * res * w;
        Vec du = frozen->solve(rhs.matrix()).array();
        double step = 1.0;
        // damping: halve the step while the residual grows
        for (int h = 0; h < 12; ++h) {
            Vec ut = u + step * du;
            ut -= (ut * w).sum() / f.area();
            Vec st = scal_curve(f, (2.0 * ut).exp() * v);
            double ct = (st * (2.0 * ut).exp() * v * w).sum() / (((2.0 * ut).exp() * v) * w).sum();
            double rt = (st - ct).abs().maxCoeff();
            if (rt < rn || step < 1e-3) {
                u = ut;
                prev = rt;
                break;
            }
            step *= 0.5;
        }
    }
    out.u = u;
    Vec dens = (2.0 * u).exp() * v;
    Vec s = scal_curve(f, dens);
    out.achieved = (s * dens * w).sum() / (dens * w).sum();
    out.residual = (s - out.achieved).abs().maxCoeff();
    out.iterations = it;
    if (out.residual > 1e-8)
        throw NumericalError("uniformize_fibre: no convergence after " + std::to_string(it) +
                             " iterations, residual " + std::to_string(out.residual));
    return out;
}

/// iF_V for a family of fibre metrics g_vv·ω_ref: the curvature form of the
/// vertical tangent bundle, built so its fibrewise part is the fibre Ricci form.
inline Form11 vertical_curvature_form(const ProductGrid& g, const Vec& g_vv) {
    Form11 ifv = g.i_del_delbar(g_vv.log());
    ifv.vv += g.pullback_fibre(g.fibre().scal_ref());
    return ifv;
}

/// Canonical geometry from raw fibre-family data: each fibre of the positive
/// density raw_vv is uniformized to the constant-curvature representative
/// (rescaled to hit s0 = -1 exactly on genus >= 2; genus-1 fibres go flat),
/// then ω₀ = π*ω_ref_fibre - i∂̄∂ log(g_vv) = -iF_V up to the reference
/// residual. σ0 seeds ω_Σ; solve_base_equation refines it.
inline KahlerSurface assemble_canonical_surface(std::shared_ptr<const ProductGrid> grid,
                                                const Vec& raw_vv, Vec sigma0) {
    const ProductGrid& g = *grid;
    require(raw_vv.size() == g.size(), "assemble_canonical_surface: family size mismatch");
    require((sigma0 > 0.0).all(), "assemble_canonical_surface: base form must be positive");
    const Factor& ff = g.fibre();
    double target = ff.genus() == 1 ? 0.0 : -1.0;

    Mat lap = detail::dense_lap(ff);
    Eigen::LDLT<Mat> frozen;
    if (ff.genus() >= 2) {
        Mat j0 = ff.weights().matrix().asDiagonal() * lap;
        j0.diagonal() -= (target * ff.weights()).matrix();
        frozen.compute(0.5 * (j0 + j0.transpose()));
    }

    CMat raw = g.as_matrix(ProductGrid::complexify(raw_vv));
    Vec g_vv(g.size());
    for (int pb = 0; pb < g.base_size(); ++pb) {
        Vec vcol = raw.col(pb).real();
        UniformizationResult ur =
            uniformize_fibre(ff, vcol, target, &lap, ff.genus() >= 2 ? &frozen : nullptr);
        Vec dens = (2.0 * ur.u).exp() * vcol;
        if (ff.genus() >= 2) dens *= ur.achieved / target;  // exact-target rescale
        g_vv.segment(Eigen::Index(pb) * ff.size(), ff.size()) = dens;
    }

    KahlerSurface s;
    s.grid = std::move(grid);
    s.omega0 = Form11(g.pullback_fibre(Vec::Ones(ff.size())), CVec::Zero(g.size()), Vec::Zero(g.size()));
    s.omega0 = s.omega0 - g.i_del_delbar(g_vv.log());
    s.sigma = std::move(sigma0);
    s.splitting = g.declare_splitting(s.omega0);
    s.theta = g.split(s.omega0, s.splitting).hh / s.sigma4();
    s.canonical = true;
    s.s0 = target;
    s.base_constant = 0.0;
    return s;
}

/// General-fibre-metric surface: Ω₀ = π*ω_ref_fibre + i∂̄∂ψ, no fibrewise
/// uniformization. theta holds ξ.
inline KahlerSurface assemble_general_surface(std::shared_ptr<const ProductGrid> grid, const Vec& psi,
                                              Vec sigma0) {
    const ProductGrid& g = *grid;
    KahlerSurface s;
    s.grid = std::move(grid);
    s.omega0 = Form11(g.pullback_fibre(Vec::Ones(g.fibre_size())), CVec::Zero(g.size()),
                      Vec::Zero(g.size()));
    s.omega0 = s.omega0 + g.i_del_delbar(psi);
    require((s.omega0.vv > 0.0).all(),
            "assemble_general_surface: potential too large, fibre metrics lose positivity");
    s.sigma = std::move(sigma0);
    s.splitting = g.declare_splitting(s.omega0);
    s.theta = g.split(s.omega0, s.splitting).hh / s.sigma4();
    s.canonical = false;
    s.s0 = 0.0;
    return s;
}

/// ξ and η of the general expansion: ξ from the splitting of Ω₀ against Ω_Σ,
/// η from the horizontal part of iF_V of the fibre metric family. On
/// canonical surfaces ξ = -η = θ.
inline std::pair<Vec, Vec> compute_xi_eta(const KahlerSurface& s) {
    const ProductGrid& g = s.g();
    require((s.omega0.vv > 0.0).all(), "compute_xi_eta: degenerate fibre metric");
    Vec xi = s.theta;
    Form11 ifv = vertical_curvature_form(g, s.omega0.vv);
    Vec eta = g.split(ifv, s.splitting).hh / s.sigma4();
    return {xi, eta};
}

/// base 2-form density of α = -π_*(F_V²) = π_*((iF_V)∧(iF_V)), base-indexed
inline Vec alpha_density(const KahlerSurface& s) {
    const ProductGrid& g = s.g();
    Form11 ifv = vertical_curvature_form(g, s.omega0.vv);
    Vec dens = wedge4(ifv, ifv);
    // fibre integral of the 4-form density
    CMat m = g.as_matrix(ProductGrid::complexify(dens));
    Vec out(g.base_size());
    for (int pb = 0; pb < g.base_size(); ++pb)
        out[pb] = (m.col(pb).real().array() * g.fibre().weights()).sum();
    return out;
}

struct BaseEquationResult {
    Vec f;             // base potential, mean-zero
    double constant;   // achieved value of Scal(ω_Σ) + π_Σ η
    double residual;
    int iterations;
};

/// Choose ω_Σ: solve Scal(ω_Σ + i∂̄∂f) + π_Ση = const for a base potential f.
/// Newton with the exact discrete Jacobian (the fourth-order base operator);
/// the solved σ is stored back into the surface and θ is refreshed.
inline BaseEquationResult solve_base_equation(KahlerSurface& s) {
    const ProductGrid& g = s.g();
    const Factor& fb = g.base();
    int n = fb.size();
    const Vec& w = fb.weights();

    // fibrewise mean 2-form of the horizontal part of iF_V (f-independent)
    Form11 ifv = vertical_curvature_form(g, s.omega0.vv);
    Vec hh_split = g.split(ifv, s.splitting).hh;
    Vec m_form = g.fibrewise_mean(hh_split, s.omega0.vv);  // η·σ as a base density

    if (s.canonical) {
        // ample tautological class: ∫α >= 0 on admissible inputs
        double ia = (alpha_density(s) * w).sum();
        if (ia < -1e-8 * (1.0 + std::abs(ia)))
            throw InputError("solve_base_equation: ∫α < 0, family outside the admissible range");
    }

    Mat lap = detail::dense_lap(fb);
    Vec f = Vec::Zero(n);
    auto eval = [&](const Vec& fc) {
        Vec sig = s.sigma + (lap * fc.matrix()).array();
        require((sig > 0.0).all(), "solve_base_equation: base form lost positivity");
        return sig;
    };
    auto G_of = [&](const Vec& sig) -> Vec {
        return (fb.scal_ref() + fb.lap(sig.log()) + m_form) / sig;
    };

    BaseEquationResult out;
    out.iterations = 0;
    double resid = std::numeric_limits<double>::max();
    for (int it = 0; it < 50; ++it) {
        out.iterations = it;
        Vec sig = eval(f);
        Vec G = G_of(sig);
        double c = (G * sig * w).sum() / (sig * w).sum();
        Vec res = G - c;
        resid = res.abs().maxCoeff();
        if (resid < 1e-11) break;

        // exact Jacobian: dG = lap(lap(df)/σ)/σ - G·lap(df)/σ, bordered with
        // the free constant and the mean-zero gauge
        Mat J(n + 1, n + 1);
        Mat inner = (1.0 / sig).matrix().asDiagonal() * lap;
        J.topLeftCorner(n, n) =
            (1.0 / sig).matrix().asDiagonal() * (lap * inner) - (G / sig).matrix().asDiagonal() * lap;
        J.topRightCorner(n, 1).setConstant(-1.0);
        J.bottomLeftCorner(1, n) = w.matrix().transpose();
        J(n, n) = 0.0;
        Eigen::VectorXd rhs(n + 1);
        rhs.head(n) = -res.matrix();
        rhs[n] = 0.0;
        Eigen::PartialPivLU<Mat> lu(J);
        Eigen::VectorXd step = lu.solve(rhs);
        require(step.allFinite(), "solve_base_equation: singular base operator");

        double damp = 1.0;
        for (int h = 0; h < 12; ++h) {
            Vec ft = f + damp * step.head(n).array();
            ft -= (ft * w).sum() / fb.area();
            Vec sigt = eval(ft);
            Vec Gt = G_of(sigt);
            double ct = (Gt * sigt * w).sum() / (sigt * w).sum();
            if ((Gt - ct).abs().maxCoeff() < resid || damp < 1e-3) {
                f = ft;
                break;
            }
            damp *= 0.5;
        }
    }
    Vec sig = eval(f);
    Vec G = G_of(sig);
    out.constant = (G * sig * w).sum() / (sig * w).sum();
    out.residual = (G - out.constant).abs().maxCoeff();
    out.f = f;
    if (out.residual > 1e-9)
        throw NumericalError("solve_base_equation: no convergence, residual " +
                             std::to_string(out.residual));

    s.sigma = sig;
    s.theta = g.split(s.omega0, s.splitting).hh / s.sigma4();
    s.base_constant = out.constant;
    return out;
}

}  // namespace cscklab
