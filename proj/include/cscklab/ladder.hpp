#pragma once

#include "cscklab/expansion.hpp"

#include <Eigen/Dense>

namespace cscklab {

/// The recursively corrected family
///   ω_{r,n} = ω_r(ψ) + i∂̄∂( Σ_{i<n} r^{1-i} f_i + Σ_{i<=n} r^{-i} φ_i ),
/// with Scal(ω_{r,n}) = s₀ + Σ c_i r^{-i} + O(r^{-n-1}).
struct LadderState {
    std::shared_ptr<const KahlerSurface> surface;
    int order = 0;
    std::vector<Vec> f;        // base potentials, base mean zero
    std::vector<Vec> phi;      // fibre potentials, fibrewise mean zero
    std::vector<double> c;     // constants c_1..c_n
    std::vector<double> stage_residuals;  // extraction fit residuals per stage
    double base_flatness = 0.0;  // deviation of the order-1 base coefficient

    Vec potential(double r) const {
        const ProductGrid& g = surface->g();
        Vec total = Vec::Zero(g.size());
        for (size_t i = 0; i < f.size(); ++i)
            total += std::pow(r, -double(i)) * g.pullback_base(f[i]);
        for (size_t i = 0; i < phi.size(); ++i) total += std::pow(r, -double(i + 1)) * phi[i];
        return total;
    }
};

inline Form11 ladder_form(const LadderState& st, double r) {
    Form11 out = family_form(*st.surface, r);
    if (st.order > 0) out = out + st.surface->g().i_del_delbar(st.potential(r));
    require(st.surface->g().positive(out), "ladder_form: positivity lost at r = " + std::to_string(r));
    return out;
}

namespace detail {

/// Per-fibre factorizations of the weighted fourth-order fibre operators
/// W(Δ_σ² - s₀Δ_σ) + rank-one mean pinning (SPD; mean-zero in, mean-zero out).
class FibreCorrector {
  public:
    explicit FibreCorrector(const KahlerSurface& s) : s_(&s) {
        const ProductGrid& g = s.g();
        int nf = g.fibre_size();
        Mat lap = dense_lap(g.fibre());
        Mat K = g.fibre().weights().matrix().asDiagonal() * lap;
        K = 0.5 * (K + K.transpose());
        CMat vv = g.as_matrix(ProductGrid::complexify(s.omega0.vv));
        solvers_.reserve(g.base_size());
        wsig_.resize(g.base_size());
        for (int pb = 0; pb < g.base_size(); ++pb) {
            Vec lam = vv.col(pb).real();
            Vec wsig = g.fibre().weights() * lam;
            wsig_[pb] = wsig;
            // S = K·diag(1/(w·λ))·K - s0·K + w_σ w_σᵀ
            Mat S = K * (1.0 / wsig).matrix().asDiagonal() * K - s.s0 * K;
            S += wsig.matrix() * wsig.matrix().transpose();
            solvers_.emplace_back();
            solvers_.back().compute(S);
            require(solvers_.back().info() == Eigen::Success,
                    "fibre correction: operator factorization failed at fibre " +
                        std::to_string(pb));
        }
    }

    /// solve (Δ_σ² - s₀Δ_σ)φ = Θ per fibre; Θ must be fibrewise mean-zero
    Vec solve(const Vec& theta) const {
        const ProductGrid& g = s_->g();
        int nf = g.fibre_size();
        double scale = theta.abs().maxCoeff();
        Vec pi = g.fibrewise_mean(theta, s_->omega0.vv);
        for (int pb = 0; pb < g.base_size(); ++pb)
            if (std::abs(pi[pb]) > 1e-9 * (1.0 + scale))
                throw InputError("fibre correction: source has nonzero fibrewise mean at fibre " +
                                 std::to_string(pb));
        Vec out(g.size());
        for (int pb = 0; pb < g.base_size(); ++pb) {
            Vec rhs = theta.segment(Eigen::Index(pb) * nf, nf) -
                      pi[pb] * Vec::Ones(nf);  // exact mean removal
            Vec sol = solvers_[pb].solve((wsig_[pb] * rhs).matrix()).array();
            out.segment(Eigen::Index(pb) * nf, nf) = sol;
        }
        return out;
    }

    /// residual of the solve, per-fibre sup
    double residual(const Vec& phi, const Vec& theta) const {
        Vec lv = vertical_laplacian(*s_, phi);
        Vec back = vertical_laplacian(*s_, lv) - s_->s0 * lv;
        return (back - theta).abs().maxCoeff();
    }

  private:
    const KahlerSurface* s_;
    std::vector<Eigen::LDLT<Mat>> solvers_;
    std::vector<Vec> wsig_;
};

}  // namespace detail

/// (Δ_Σ² - c_base·Δ_Σ) f = c - Θ on the base; returns (f, c) with c the
/// σ-mean of Θ and f base mean-zero.
inline std::pair<Vec, double> base_correction(const KahlerSurface& s, const Vec& theta_base) {
    const Factor& fb = s.g().base();
    require(theta_base.size() == fb.size(), "base_correction: base field size mismatch");
    Vec wsig = fb.weights() * s.sigma;
    double c = (theta_base * wsig).sum() / wsig.sum();
    Mat lap = detail::dense_lap(fb);
    Mat K = fb.weights().matrix().asDiagonal() * lap;
    K = 0.5 * (K + K.transpose());
    Mat S = K * (1.0 / wsig).matrix().asDiagonal() * K - s.base_constant * K;
    S += wsig.matrix() * wsig.matrix().transpose();
    Eigen::LDLT<Mat> solver(S);
    Vec rhs = c - theta_base.array();
    rhs -= (rhs * wsig).sum() / wsig.sum();
    Vec f = solver.solve((wsig * rhs).matrix()).array();
    // residual check: the operator must not be near-singular on mean-zero fields
    Vec lf = fb.lap(f) / s.sigma;
    Vec back = fb.lap(lf) / s.sigma - s.base_constant * lf;
    double resid = (back - rhs).abs().maxCoeff();
    if (resid > 1e-9 * (1.0 + theta_base.abs().maxCoeff()))
        throw NumericalError("base_correction: solve residual " + std::to_string(resid) +
                             " (operator near singular on mean-zero fields)");
    return {f, c};
}

struct LadderOptions {
    Vec extraction_rlist;  // defaults to 10 log-spaced values in [32, 512]
    int max_order = 6;
};

/// Build the order-n approximate solution by alternating base and fibre
/// corrections on the fitted coefficient fields of Scal(ω_{r,k}).
inline LadderState build_ladder(std::shared_ptr<const KahlerSurface> surface, int n,
                                LadderOptions opts = {}) {
    require(n >= 0, "build_ladder: order must be nonnegative");
    const KahlerSurface& s = *surface;
    require(s.canonical, "build_ladder: surface must carry canonical fibre metrics");
    LadderOptions o = std::move(opts);
    require(n <= o.max_order, "build_ladder: order capped at " + std::to_string(o.max_order));
    if (o.extraction_rlist.size() == 0) o.extraction_rlist = logspaced_rlist(32.0, 512.0, 10);
    const Vec& rs = o.extraction_rlist;
    const ProductGrid& g = s.g();

    LadderState st;
    st.surface = surface;
    st.order = 0;
    if (n == 0) return st;

    detail::FibreCorrector fibre(s);

    auto sweep_coefficient = [&](int k) {
        Mat samples(g.size(), rs.size());
        for (int i = 0; i < rs.size(); ++i)
            samples.col(i) = scal(g, ladder_form(st, rs[i])).matrix();
        int deg = std::min<int>(k + 3, int(rs.size()) - 1);
        SeriesFit fit = fit_series(samples, rs, deg);
        st.stage_residuals.push_back(fit.fit_residual);
        return fit.coefficient(k);
    };

    for (int k = 1; k <= n; ++k) {
        Vec ek = sweep_coefficient(k);
        Vec bk = g.fibrewise_mean(ek, s.omega0.vv);
        if (k == 1) {
            // the base part of the first coefficient is constant by the
            // choice of ω_Σ; record its flatness and take the mean as c₁
            Vec wsig = g.base().weights() * s.sigma;
            double c1 = (bk * wsig).sum() / wsig.sum();
            st.base_flatness = (bk - c1).abs().maxCoeff();
            st.c.push_back(c1);
        } else {
            auto [fk, ck] = base_correction(s, bk);
            st.f.push_back(fk);
            st.c.push_back(ck);
            st.order = k;  // include f_{k-1} in the reassembled family
            ek = sweep_coefficient(k);
        }
        Vec mk = ek - g.pullback_base(g.fibrewise_mean(ek, s.omega0.vv));
        Vec phik = fibre.solve(-mk);
        st.phi.push_back(phik);
        st.order = k;
    }
    return st;
}

/// c_i = (-1)^i A^{-i} B^i (A^{-1}C - B^{-1}D)
inline double c_closed_form(const IntersectionNumbers& n, int i) {
    require(i >= 1, "c_closed_form: index starts at 1");
    require(n.A != 0.0 && n.B != 0.0, "c_closed_form: zero intersection number A or B");
    return std::pow(-1.0, i) * std::pow(n.B / n.A, i) * (n.C / n.A - n.D / n.B);
}

/// series coefficients of (rC+D)/(rA+B) about r = ∞: c_0 = C/A, then the
/// closed form above (division-free; valid for B = 0)
inline Vec mean_scal_series(const IntersectionNumbers& n, int kmax) {
    Vec c(kmax + 1);
    c[0] = n.C / n.A;
    double q = n.D / n.A - n.B * n.C / (n.A * n.A);  // coefficient of r^{-1}
    for (int i = 1; i <= kmax; ++i) {
        c[i] = q;
        q *= -n.B / n.A;
    }
    return c;
}

struct ResidualReport {
    Vec rlist;
    Vec c0_norm;   // sup residual per r
    Vec l2_norm;   // L²(g_r) residual per r
    SlopeFit c0_fit;
    SlopeFit l2_fit;
};

/// decay of Scal(ω_{r,n}) - (s₀ + Σ c_i r^{-i}) over the parameter list
inline ResidualReport residual_report(const LadderState& st, const Vec& rlist) {
    require(rlist.size() >= 4, "residual_report: need at least 4 parameter values");
    const KahlerSurface& s = *st.surface;
    const ProductGrid& g = s.g();
    ResidualReport rep;
    rep.rlist = rlist;
    rep.c0_norm = Vec(rlist.size());
    rep.l2_norm = Vec(rlist.size());
    for (int i = 0; i < rlist.size(); ++i) {
        double r = rlist[i];
        Form11 om = ladder_form(st, r);
        double model = s.s0;
        for (size_t k = 0; k < st.c.size(); ++k) model += st.c[k] * std::pow(r, -double(k + 1));
        Vec res = scal(g, om) - model;
        rep.c0_norm[i] = res.abs().maxCoeff();
        rep.l2_norm[i] = std::sqrt(g.integrate(res * res, ProductGrid::det_ratio(om)));
    }
    rep.c0_fit = loglog_slope(rlist, rep.c0_norm);
    rep.l2_fit = loglog_slope(rlist, rep.l2_norm);
    return rep;
}

}  // namespace cscklab
