#pragma once

#include "cscklab/geometry.hpp"
#include "cscklab/mesh_factor.hpp"
#include "cscklab/torus_factor.hpp"

#include <memory>

namespace cscklab::testing {

inline std::shared_ptr<const ProductGrid> torus_grid(int nf = 16, int nb = 16) {
    return std::make_shared<ProductGrid>(std::make_shared<TorusFactor>(nf, nf),
                                         std::make_shared<TorusFactor>(nb, nb));
}

inline FactorPtr octagon_factor(int m = 5) {
    static std::map<int, FactorPtr> cache;
    auto it = cache.find(m);
    if (it == cache.end())
        it = cache.emplace(m, std::make_shared<MeshFactor>(genus2_octagon(m))).first;
    return it->second;
}

inline std::shared_ptr<const ProductGrid> mesh_mesh_grid(int m = 5) {
    return std::make_shared<ProductGrid>(octagon_factor(m), octagon_factor(m));
}

inline std::shared_ptr<const ProductGrid> mesh_torus_grid(int m = 5, int nb = 16) {
    return std::make_shared<ProductGrid>(octagon_factor(m), std::make_shared<TorusFactor>(nb, nb));
}

inline std::shared_ptr<const ProductGrid> torus_mesh_grid(int nf = 16, int m = 5) {
    return std::make_shared<ProductGrid>(std::make_shared<TorusFactor>(nf, nf), octagon_factor(m));
}

/// product of the j-th fibre and k-th base eigenfunctions (j,k >= 1 for
/// mean-zero oscillation), normalized to unit sup
inline Vec eig_product(const ProductGrid& g, int j, int k) {
    CMat cf = CMat::Zero(g.fibre_size(), 1), cb = CMat::Zero(g.base_size(), 1);
    cf(j, 0) = 1.0;
    cb(k, 0) = 1.0;
    Vec uf = g.fibre().from_eig_cols(cf).real().col(0);
    Vec ub = g.base().from_eig_cols(cb).real().col(0);
    Vec out(g.size());
    for (int i = 0; i < g.size(); ++i) {
        auto [pf, pb] = g.point(i);
        out[i] = uf[pf] * ub[pb];
    }
    return out / out.abs().maxCoeff();
}

/// canonical product surface (raw family = 1)
inline KahlerSurface product_surface(std::shared_ptr<const ProductGrid> grid) {
    const ProductGrid& g = *grid;
    return assemble_canonical_surface(std::move(grid), Vec::Ones(g.size()), Vec::Ones(g.base_size()));
}

/// canonical surface carrying perturbation potentials at both adiabatic
/// weights; the profiles mix fibrewise-mean-zero and base content so the
/// correction ladder has work to do at every order
inline KahlerSurface perturbed_surface(std::shared_ptr<const ProductGrid> grid, double amp,
                                       int j = 1, int k = 1) {
    const ProductGrid& g = *grid;
    CMat cb = CMat::Zero(g.base_size(), 1);
    cb(k, 0) = 1.0;
    Vec vb = g.base().from_eig_cols(cb).real().col(0);
    vb /= vb.abs().maxCoeff();
    Vec profile = eig_product(g, j, k) + g.pullback_base(vb);
    Vec profile2 = eig_product(g, j + 1, k) + g.pullback_base(vb * vb - 0.5);
    KahlerSurface s =
        assemble_canonical_surface(std::move(grid), Vec::Ones(g.size()), Vec::Ones(g.base_size()));
    solve_base_equation(s);
    s.psi = amp * profile;
    s.psi2 = amp * profile2;
    return s;
}

/// general-fibre-metric surface: Ω₀ = π*ω_ref + i∂̄∂ψ with ψ = amp·profile
inline KahlerSurface general_surface(std::shared_ptr<const ProductGrid> grid, double amp, int j = 1,
                                     int k = 1) {
    const ProductGrid& g = *grid;
    Vec psi = amp * eig_product(g, j, k);
    return assemble_general_surface(std::move(grid), psi, Vec::Ones(g.base_size()));
}

}  // namespace cscklab::testing
