#pragma once

#include "cscklab/operators.hpp"

#include <optional>

namespace cscklab {

using Preconditioner = std::function<Vec(const Vec&)>;

/// Preconditioner diagonal in the tensor eigenbasis of the two factor
/// Laplacians: x ↦ from_eig( to_eig(x) / fun(λ_fibre, λ_base) ).
inline Preconditioner product_preconditioner(const ProductGrid& g,
                                             const std::function<double(double, double)>& fun) {
    const Factor& ff = g.fibre();
    const Factor& fb = g.base();
    Mat divisor(ff.size(), fb.size());
    for (int j = 0; j < ff.size(); ++j)
        for (int k = 0; k < fb.size(); ++k)
            divisor(j, k) = fun(ff.eigenvalues()[j], fb.eigenvalues()[k]);
    require((divisor.array() > 0).all(), "product_preconditioner: divisor must be positive");
    return [&g, divisor](const Vec& x) {
        CMat c = g.fibre().to_eig_cols(g.as_matrix(ProductGrid::complexify(x)));
        c = g.base().to_eig_cols(CMat(c.transpose()));
        c.array() /= divisor.transpose().array().cast<cplx>();
        c = g.base().from_eig_cols(c);
        c = g.fibre().from_eig_cols(CMat(c.transpose()));
        return Vec(ProductGrid::flatten(c).real());
    };
}

struct SolveStats {
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

/// Preconditioned conjugate gradients in the handle's L² measure, restricted
/// to the range of `project` when given (mean-zero solves). Suitable for the
/// self-adjoint operators here and for the nearly-symmetric projected
/// linearisations on approximately cscK backgrounds.
inline SolveStats pcg(const LinearOperatorHandle& A, const Vec& b, Vec& x, double rel_tol = 1e-10,
                      int max_iter = 400, const Preconditioner* M = nullptr,
                      const std::function<Vec(const Vec&)>* project = nullptr) {
    auto P = [&](const Vec& v) { return project ? (*project)(v) : v; };
    if (x.size() != b.size()) x = Vec::Zero(b.size());
    Vec r = P(b - A.apply(x));
    double bnorm = A.norm(P(b));
    SolveStats st;
    if (bnorm == 0.0) {
        x = Vec::Zero(b.size());
        st.converged = true;
        return st;
    }
    Vec z = M ? P((*M)(r)) : r;
    Vec p = z;
    double rz = A.dot(r, z);
    double best = std::numeric_limits<double>::max();
    for (int it = 0; it < max_iter; ++it) {
        st.iterations = it + 1;
        Vec Ap = P(A.apply(p));
        double pAp = A.dot(p, Ap);
        if (!(std::abs(pAp) > 0)) break;
        double alpha = rz / pAp;
        x += alpha * p;
        r -= alpha * Ap;
        double rn = A.norm(r);
        st.residual = rn / bnorm;
        if (rn < best) best = rn;
        if (st.residual < rel_tol) {
            st.converged = true;
            break;
        }
        // restart safeguard against nonsymmetric drift
        if (rn > 100.0 * best) {
            r = P(b - A.apply(x));
            z = M ? P((*M)(r)) : r;
            p = z;
            rz = A.dot(r, z);
            continue;
        }
        Vec zn = M ? P((*M)(r)) : r;
        double rzn = A.dot(r, zn);
        p = zn + (rzn / rz) * p;
        z = zn;
        rz = rzn;
    }
    x = P(x);
    return st;
}

struct EigResult {
    Vec values;               // ascending
    std::vector<Vec> vectors; // normalized in the measure
    bool converged = false;
};

/// Smallest eigenvalues of a self-adjoint PSD handle by shifted block inverse
/// power iteration with fixed seed. `deflate` vectors are projected out
/// (e.g. the constants). Generalized problem A v = λ m v in the handle's
/// measure m.
inline EigResult smallest_eigenvalues(const LinearOperatorHandle& A, int k, std::uint64_t seed,
                                      const std::vector<Vec>& deflate = {}, double shift = 0.0,
                                      const Preconditioner* M = nullptr, int iters = 30,
                                      double solve_tol = 1e-10) {
    Eigen::Index n = A.measure.size();
    Rng rng(seed);
    std::vector<Vec> defl;
    for (const Vec& d : deflate) defl.push_back(d / A.norm(d));
    auto project = std::function<Vec(const Vec&)>([&](const Vec& v) {
        Vec out = v;
        for (const Vec& d : defl) out -= A.dot(out, d) * d;
        return out;
    });

    if (shift == 0.0) shift = 1e-12;
    LinearOperatorHandle As = A;
    auto base_apply = A.apply;
    As.apply = [base_apply, shift](const Vec& x) { return Vec(base_apply(x) + shift * x); };
    As.adjoint_apply = As.apply;

    std::vector<Vec> X(k);
    for (int i = 0; i < k; ++i) X[i] = project(rng.normal_vec(n));
    auto orthonormalize = [&](std::vector<Vec>& v) {
        for (int i = 0; i < int(v.size()); ++i) {
            for (int j = 0; j < i; ++j) v[i] -= A.dot(v[i], v[j]) * v[j];
            double nn = A.norm(v[i]);
            require(nn > 0, "eigensolver: block collapsed");
            v[i] /= nn;
        }
    };
    orthonormalize(X);

    EigResult out;
    out.values = Vec::Zero(k);
    Vec prev = Vec::Constant(k, std::numeric_limits<double>::max());
    for (int it = 0; it < iters; ++it) {
        std::vector<Vec> Y(k);
        for (int i = 0; i < k; ++i) {
            Vec y = X[i];
            pcg(As, X[i], y, solve_tol, 400, M, &project);
            Y[i] = project(y);
        }
        orthonormalize(Y);
        // Rayleigh-Ritz on the block
        Mat S(k, k);
        std::vector<Vec> AY(k);
        for (int i = 0; i < k; ++i) AY[i] = A.apply(Y[i]);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) S(i, j) = A.dot(AY[j], Y[i]);
        Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (S + S.transpose()));
        std::vector<Vec> Z(k);
        for (int i = 0; i < k; ++i) {
            Z[i] = Vec::Zero(n);
            for (int j = 0; j < k; ++j) Z[i] += es.eigenvectors()(j, i) * Y[j];
        }
        X = Z;
        out.values = es.eigenvalues().array();
        if ((out.values - prev).abs().maxCoeff() <
            1e-12 * (1.0 + out.values.abs().maxCoeff())) {
            out.converged = true;
            break;
        }
        prev = out.values;
    }
    out.vectors = X;
    return out;
}

/// operator norm ‖A‖ = sqrt(λ_max(A*A)) by power iteration, fixed seed
inline double power_norm(const LinearOperatorHandle& A, std::uint64_t seed, int iters = 20) {
    Rng rng(seed);
    Vec x = rng.normal_vec(A.measure.size());
    x /= A.norm(x);
    double lam = 0.0;
    for (int it = 0; it < iters; ++it) {
        Vec y = A.adjoint_apply(A.apply(x));
        lam = std::max(A.dot(y, x), 0.0);
        double nn = A.norm(y);
        if (nn == 0) return 0.0;
        x = y / nn;
    }
    return std::sqrt(lam);
}

}  // namespace cscklab
