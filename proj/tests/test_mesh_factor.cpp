#include "cscklab/mesh_factor.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <sstream>

using namespace cscklab;

namespace {
const MeshFactor& octagon6() {
    static MeshFactor f(genus2_octagon(6));
    return f;
}
}  // namespace

TEST_CASE("octagon mesh is a closed genus-2 surface") {
    MeshData md = genus2_octagon(4);
    size_t ne = md.triangles.size() * 3 / 2;
    int chi = md.n_vertices - int(ne) + int(md.triangles.size());
    CHECK(chi == -2);
    CHECK_NOTHROW(MeshFactor(md));
}

TEST_CASE("canonical reference is hyperbolic") {
    const MeshFactor& f = octagon6();
    CHECK(f.genus() == 2);
    // Scal ≡ -1 up to the uniformization residual
    CHECK((f.scal_ref() + 1.0).abs().maxCoeff() < 1e-9);
    // Gauss-Bonnet pins the area: -1 · area = 2π·χ = -4π
    CHECK(f.area() == Catch::Approx(4.0 * kPi).epsilon(1e-10));
    // exact discrete Gauss-Bonnet (angle defects are combinatorial)
    CHECK(f.integrate(f.scal_ref()) == Catch::Approx(-4.0 * kPi).epsilon(1e-12));
}

TEST_CASE("mesh laplacian: kernel, positivity, adjointness") {
    const MeshFactor& f = octagon6();
    Vec one = Vec::Ones(f.size());
    CHECK(f.lap(one).abs().maxCoeff() < 1e-12);
    CHECK(f.eigenvalues()[0] == 0.0);
    CHECK(f.eigenvalues()[1] > 0.01);  // spectral gap of a compact hyperbolic surface

    Rng rng(13);
    Vec u = rng.normal_vec(f.size()), v = rng.normal_vec(f.size());
    double lhs = (f.lap(u) * v * f.weights()).sum();
    double rhs = (u * f.lap(v) * f.weights()).sum();
    CHECK(std::abs(lhs - rhs) < 1e-10 * std::abs(lhs));
    CHECK((f.lap(u) * u * f.weights()).sum() >= 0.0);
}

TEST_CASE("mesh derivative operators") {
    const MeshFactor& f = octagon6();
    Rng rng(17);
    Vec u = rng.normal_vec(f.size());
    SECTION("derivatives annihilate constants") {
        Vec one = Vec::Ones(f.size());
        CHECK(f.dz(one).abs().maxCoeff() < 1e-12);
        CMat c = Factor::to_cmat(one);
        CHECK(f.dz_form_cols(c).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("energy identity: <lap u, u> = ||dzbar_form u||^2 for real u") {
        // the same Δ = (∂̄)*∂̄ identity the spectral backend satisfies
        CMat c = Factor::to_cmat(u);
        CVec d = f.dzbar_form_cols(c).col(0);
        double energy = (f.lap(u) * u * f.weights()).sum();
        double viaform = (d.abs2() * f.form_weights()).sum();
        CHECK(energy == Catch::Approx(viaform).epsilon(1e-10));
    }
    SECTION("form adjoint identity is exact") {
        CMat c = Factor::to_cmat(u);
        CMat g(f.form_size(), 1);
        Rng rng2(5);
        for (int i = 0; i < f.form_size(); ++i) g(i, 0) = cplx(rng2.normal(), rng2.normal());
        cplx lhs = ((f.dzbar_form_cols(c).col(0).array() * g.col(0).array().conjugate()) *
                    f.form_weights().cast<cplx>())
                       .sum();
        cplx rhs = ((c.col(0).array() * f.dzbar_form_adj_cols(g).col(0).array().conjugate()) *
                    f.weights().cast<cplx>())
                       .sum();
        CHECK(std::abs(lhs - rhs) < 1e-12 * (1.0 + std::abs(lhs)));
    }
    SECTION("eigentransform round trip") {
        CMat c = Factor::to_cmat(u);
        CMat back = f.from_eig_cols(f.to_eig_cols(c));
        CHECK((back - c).cwiseAbs().maxCoeff() < 1e-9);
    }
    SECTION("no holomorphic tangent sections: the dbar energy gap is positive") {
        // smallest eigenvalue of the ∂̄-form on T via dense assembly
        int n = f.size();
        CMat A = CMat::Zero(n, n);
        CMat id = CMat::Identity(n, n);
        CMat d = f.dzbar_T_form_cols(id);
        for (int j = 0; j < n; ++j)
            A.col(j) = f.dzbar_T_form_adj_cols(d.col(j)).col(0);
        // symmetric w.r.t. weights: W^(1/2) A W^(-1/2) is Hermitian
        Vec sw = f.weights().sqrt();
        CMat H = sw.matrix().asDiagonal().toDenseMatrix().cast<cplx>() * A *
                 sw.inverse().matrix().asDiagonal().toDenseMatrix().cast<cplx>();
        Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (H + H.adjoint()));
        CHECK(es.eigenvalues()[0] > 1e-4);
    }
}

TEST_CASE("OFF ingestion") {
    SECTION("parses positions and conformal factors") {
        std::istringstream in(
            "OFF\n4 4 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n"
            "3 0 1 2\n3 0 3 1\n3 0 2 3\n3 1 3 2\n"
            "1.0\n1.0\n1.0\n4.0\n");
        MeshData md = load_off(in);
        CHECK(md.n_vertices == 4);
        CHECK(md.triangles.size() == 4);
        // edge (0,3): |p| = 1 scaled by sqrt(1*4) = 2
        CHECK(md.lengths[1][2] == Catch::Approx(2.0));
        // tetrahedron is genus 0: rejected as a factor
        CHECK_THROWS_AS(MeshFactor(md), InputError);
    }
    SECTION("missing header is an error") {
        std::istringstream in("PLY\n");
        CHECK_THROWS_AS(load_off(in), InputError);
    }
    SECTION("meshes with boundary are rejected") {
        MeshData md;
        md.n_vertices = 3;
        md.triangles.push_back({0, 1, 2});
        md.lengths.push_back({1.0, 1.0, 1.0});
        CHECK_THROWS_AS(MeshFactor(md), InputError);
    }
}
