#pragma once

#include "cscklab/factor.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <array>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

namespace cscklab {

/// Combinatorics + intrinsic geometry of a closed triangulated surface.
/// lengths[t][i] is the length of the edge opposite corner i of triangle t.
struct MeshData {
    int n_vertices = 0;
    std::vector<std::array<int, 3>> triangles;
    std::vector<std::array<double, 3>> lengths;
};

namespace detail {

/// hyperbolic distance between two points of the Klein disc
inline double klein_distance(const Eigen::Vector2d& u, const Eigen::Vector2d& v) {
    double uu = u.squaredNorm(), vv = v.squaredNorm(), uv = u.dot(v);
    double arg = (1.0 - uv) / std::sqrt((1.0 - uu) * (1.0 - vv));
    return std::acosh(std::max(arg, 1.0));
}

/// point at hyperbolic-arclength fraction s along the Klein chord a -> b
inline Eigen::Vector2d klein_lerp_arclength(const Eigen::Vector2d& a, const Eigen::Vector2d& b, double s) {
    if (s <= 0.0) return a;
    if (s >= 1.0) return b;
    double total = klein_distance(a, b);
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 60; ++it) {
        double mid = 0.5 * (lo + hi);
        Eigen::Vector2d p = a + mid * (b - a);
        (klein_distance(a, p) < s * total ? lo : hi) = mid;
    }
    return a + 0.5 * (lo + hi) * (b - a);
}

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) {
        for (int i = 0; i < n; ++i) parent[i] = i;
    }
    int find(int a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace detail

/// Genus-2 surface as the regular hyperbolic octagon (interior angle π/4,
/// cosh R = cot²(π/8)) with sides identified in the pattern aba⁻¹b⁻¹cdc⁻¹d⁻¹.
/// Subdivision is radial with m rows per pie slice; boundary points are
/// spaced by equal hyperbolic arclength so the side pairings identify
/// subdivision vertices exactly. Edge lengths are hyperbolic chord distances
/// in the Klein model, where geodesics are straight.
inline MeshData genus2_octagon(int m) {
    require(m >= 3, "octagon mesh: need at least 3 subdivisions per side");
    const double R = std::acosh(std::pow(1.0 / std::tan(kPi / 8.0), 2.0));
    const double rk = std::tanh(R);

    std::vector<Eigen::Vector2d> pts;
    auto add_point = [&](const Eigen::Vector2d& p) {
        pts.push_back(p);
        return int(pts.size()) - 1;
    };

    int center = add_point(Eigen::Vector2d::Zero());
    std::array<Eigen::Vector2d, 8> corner;
    for (int k = 0; k < 8; ++k)
        corner[k] = rk * Eigen::Vector2d(std::cos(2.0 * kPi * k / 8.0), std::sin(2.0 * kPi * k / 8.0));

    // ray[k][j]: points from the center toward corner k, j = 0..m
    std::vector<std::vector<int>> ray(8, std::vector<int>(m + 1));
    for (int k = 0; k < 8; ++k) {
        ray[k][0] = center;
        for (int j = 1; j <= m; ++j)
            ray[k][j] = add_point(detail::klein_lerp_arclength(Eigen::Vector2d::Zero(), corner[k], double(j) / m));
    }

    // rows of each pie slice; row j runs from ray[k][j] to ray[k+1][j]
    std::vector<std::vector<std::vector<int>>> row(8);
    std::vector<std::array<int, 3>> tris;
    for (int k = 0; k < 8; ++k) {
        int k2 = (k + 1) % 8;
        row[k].assign(m + 1, {});
        row[k][0] = {center};
        for (int j = 1; j <= m; ++j) {
            row[k][j].resize(j + 1);
            row[k][j][0] = ray[k][j];
            row[k][j][j] = ray[k2][j];
            for (int i = 1; i < j; ++i)
                row[k][j][i] = add_point(
                    detail::klein_lerp_arclength(pts[ray[k][j]], pts[ray[k2][j]], double(i) / j));
        }
        for (int j = 1; j <= m; ++j)
            for (int i = 0; i < j; ++i) {
                tris.push_back({row[k][j][i], row[k][j][i + 1], row[k][j - 1][i]});
                if (i + 1 < j) tris.push_back({row[k][j][i + 1], row[k][j - 1][i + 1], row[k][j - 1][i]});
            }
    }

    // side pairings: s0~s2, s1~s3, s4~s6, s5~s7, orientation reversed
    detail::UnionFind uf(int(pts.size()));
    for (int k : {0, 1, 4, 5}) {
        int kp = k + 2;
        for (int i = 0; i <= m; ++i) uf.unite(row[k][m][i], row[kp][m][m - i]);
    }

    std::vector<int> label(pts.size(), -1);
    int nv = 0;
    for (int i = 0; i < int(pts.size()); ++i) {
        int r = uf.find(i);
        if (label[r] < 0) label[r] = nv++;
        label[i] = label[r];
    }

    MeshData md;
    md.n_vertices = nv;
    for (auto& t : tris) {
        md.triangles.push_back({label[t[0]], label[t[1]], label[t[2]]});
        md.lengths.push_back({detail::klein_distance(pts[t[1]], pts[t[2]]),
                              detail::klein_distance(pts[t[2]], pts[t[0]]),
                              detail::klein_distance(pts[t[0]], pts[t[1]])});
    }
    return md;
}

/// Parse an ASCII OFF mesh. Positions give Euclidean edge lengths, optionally
/// rescaled by per-vertex conformal factors listed one per line after the
/// face block (l_ij = |p_i - p_j| · sqrt(f_i f_j)).
inline MeshData load_off(std::istream& in) {
    std::string tok;
    in >> tok;
    require(bool(in) && tok == "OFF", "OFF parse: missing OFF header");
    int nv = 0, nf = 0, ne = 0;
    in >> nv >> nf >> ne;
    require(bool(in) && nv > 0 && nf > 0, "OFF parse: bad counts");
    std::vector<Eigen::Vector3d> pos(nv);
    for (int i = 0; i < nv; ++i) {
        in >> pos[i][0] >> pos[i][1] >> pos[i][2];
        require(bool(in), "OFF parse: truncated vertex block");
    }
    MeshData md;
    md.n_vertices = nv;
    for (int f = 0; f < nf; ++f) {
        int k = 0;
        in >> k;
        require(bool(in) && k == 3, "OFF parse: only triangle faces are supported");
        std::array<int, 3> t{};
        in >> t[0] >> t[1] >> t[2];
        require(bool(in), "OFF parse: truncated face block");
        for (int i : t) require(i >= 0 && i < nv, "OFF parse: vertex index out of range");
        md.triangles.push_back(t);
    }
    Vec factor = Vec::Ones(nv);
    for (int i = 0; i < nv; ++i) {
        double v;
        if (in >> v)
            factor[i] = v;
        else {
            require(i == 0, "OFF parse: truncated conformal factor block");
            break;
        }
    }
    require((factor > 0.0).all(), "OFF parse: conformal factors must be positive");
    for (auto& t : md.triangles) {
        std::array<double, 3> l{};
        for (int i = 0; i < 3; ++i) {
            int a = t[(i + 1) % 3], b = t[(i + 2) % 3];
            l[i] = (pos[a] - pos[b]).norm() * std::sqrt(factor[a] * factor[b]);
        }
        md.lengths.push_back(l);
    }
    return md;
}

inline MeshData load_off(const std::string& path) {
    std::ifstream in(path);
    require(bool(in), "cannot open mesh file: " + path);
    return load_off(in);
}

/// First-order FEM calculus on a closed triangulated surface of genus >= 2.
///
/// On construction the reference metric is made canonically hyperbolic: the
/// discrete uniformization Scal(λ·mesh) = -1 is solved to machine precision
/// and λ is folded into the reference weights, Laplacian and frames. The
/// stored scal_ref() is therefore ≈ -1 with the uniformization residual.
class MeshFactor final : public Factor {
  public:
    explicit MeshFactor(const MeshData& md, double target_scal = -1.0) {
        build_combinatorics(md);
        build_geometry(md);
        uniformize_reference(target_scal);
        build_operators();
        build_eigenbasis();
    }

    int size() const override { return n_; }
    double area() const override { return area_; }
    const Vec& weights() const override { return weights_; }
    const Vec& scal_ref() const override { return scal_ref_; }
    int genus() const override { return genus_; }
    std::string kind() const override { return "mesh"; }

    CMat lap_cols(const CMat& f) const override {
        CMat out(f.rows(), f.cols());
        out.real() = stiff_half_ * f.real();
        out.imag() = stiff_half_ * f.imag();
        out.array().colwise() /= weights_.cast<cplx>();
        return out;
    }
    CMat dz_cols(const CMat& f) const override { return dz_vert_ * f; }
    CMat dzbar_cols(const CMat& f) const override { return dzbar_vert_ * f; }
    CMat dz_adj_cols(const CMat& f) const override {
        return weighted_adjoint(dz_vert_adj_, f, weights_, weights_);
    }
    CMat dzbar_adj_cols(const CMat& f) const override {
        return weighted_adjoint(dzbar_vert_adj_, f, weights_, weights_);
    }

    int form_size() const override { return nt_; }
    const Vec& form_weights() const override { return form_weights_; }
    CMat dz_form_cols(const CMat& f) const override { return dz_form_ * f; }
    CMat dzbar_form_cols(const CMat& f) const override { return dzbar_form_ * f; }
    CMat dz_form_adj_cols(const CMat& g) const override {
        return weighted_adjoint(dz_form_adj_, g, form_weights_, weights_);
    }
    CMat dzbar_form_adj_cols(const CMat& g) const override {
        return weighted_adjoint(dzbar_form_adj_, g, form_weights_, weights_);
    }
    Vec to_form_space(const Vec& f) const override {
        Vec out(nt_);
        for (int t = 0; t < nt_; ++t)
            out[t] = (f[tris_[t][0]] + f[tris_[t][1]] + f[tris_[t][2]]) / 3.0;
        return out;
    }
    CMat dzbar_T_form_cols(const CMat& xi) const override { return dzbar_T_form_ * xi; }
    CMat dzbar_T_form_adj_cols(const CMat& g) const override {
        return weighted_adjoint(dzbar_T_form_adj_, g, form_weights_, weights_);
    }

    const Vec& eigenvalues() const override { return eigenvalues_; }
    CMat to_eig_cols(const CMat& f) const override {
        CMat wf = f;
        wf.array().colwise() *= weights_.cast<cplx>();
        return eigvecs_.transpose().cast<cplx>() * wf;
    }
    CMat from_eig_cols(const CMat& c) const override { return eigvecs_.cast<cplx>() * c; }

    /// residual of the reference uniformization, sup over vertices
    double uniformization_residual() const { return (scal_ref_ - scal_ref_.mean()).abs().maxCoeff(); }

  private:
    using SpC = Eigen::SparseMatrix<cplx>;
    using SpD = Eigen::SparseMatrix<double>;

    void build_combinatorics(const MeshData& md) {
        n_ = md.n_vertices;
        nt_ = int(md.triangles.size());
        require(n_ > 0 && nt_ > 0, "mesh factor: empty mesh");
        tris_ = md.triangles;
        std::map<std::pair<int, int>, int> edge_count;
        std::map<std::pair<int, int>, int> directed;
        for (auto& t : tris_)
            for (int i = 0; i < 3; ++i) {
                int a = t[i], b = t[(i + 1) % 3];
                require(a != b, "mesh factor: degenerate triangle");
                edge_count[{std::min(a, b), std::max(a, b)}]++;
                directed[{a, b}]++;
            }
        for (auto& [e, c] : edge_count)
            require(c == 2, "mesh factor: mesh has boundary or non-manifold edges");
        for (auto& [e, c] : directed)
            require(c == 1, "mesh factor: inconsistent triangle orientation");
        int ne = int(edge_count.size());
        int chi = n_ - ne + nt_;
        require(chi % 2 == 0, "mesh factor: impossible Euler characteristic");
        genus_ = (2 - chi) / 2;
        require(genus_ >= 2, "mesh factor: Euler characteristic " + std::to_string(chi) +
                                 " does not give genus >= 2");
    }

    void build_geometry(const MeshData& md) {
        corner_angle_.assign(nt_, {});
        chart_.assign(nt_, {});
        tri_area_raw_ = Vec(nt_);
        for (int t = 0; t < nt_; ++t) {
            auto [l0, l1, l2] = md.lengths[t];
            require(l0 > 0 && l1 > 0 && l2 > 0, "mesh factor: nonpositive edge length");
            require(l0 < l1 + l2 && l1 < l0 + l2 && l2 < l0 + l1,
                    "mesh factor: triangle inequality violated");
            double x = (l1 * l1 + l2 * l2 - l0 * l0) / (2.0 * l2);
            double y2 = l1 * l1 - x * x;
            require(y2 > 0, "mesh factor: degenerate flattened triangle");
            double y = std::sqrt(y2);
            chart_[t] = {cplx(0, 0), cplx(l2, 0), cplx(x, y)};
            tri_area_raw_[t] = 0.5 * l2 * y;
            for (int i = 0; i < 3; ++i) {
                cplx u = chart_[t][(i + 1) % 3] - chart_[t][i];
                cplx v = chart_[t][(i + 2) % 3] - chart_[t][i];
                corner_angle_[t][i] = std::arg(v / u);
                require(corner_angle_[t][i] > 0, "mesh factor: negative corner angle");
            }
        }

        // lumped vertex areas and angle defects
        w_raw_ = Vec::Zero(n_);
        Vec angle_sum = Vec::Zero(n_);
        for (int t = 0; t < nt_; ++t)
            for (int i = 0; i < 3; ++i) {
                w_raw_[tris_[t][i]] += tri_area_raw_[t] / 3.0;
                angle_sum[tris_[t][i]] += corner_angle_[t][i];
            }
        scal_raw_ = (2.0 * kPi - angle_sum) / w_raw_;

        // cotan stiffness; lap_raw = K/(2 w_raw) is the trace of i∂̄∂ against
        // the raw piecewise metric
        std::vector<Eigen::Triplet<double>> trip;
        for (int t = 0; t < nt_; ++t)
            for (int i = 0; i < 3; ++i) {
                int a = tris_[t][(i + 1) % 3], b = tris_[t][(i + 2) % 3];
                double cot = 1.0 / std::tan(corner_angle_[t][i]);
                trip.emplace_back(a, b, -0.5 * cot);
                trip.emplace_back(b, a, -0.5 * cot);
                trip.emplace_back(a, a, 0.5 * cot);
                trip.emplace_back(b, b, 0.5 * cot);
            }
        stiff_raw_.resize(n_, n_);
        stiff_raw_.setFromTriplets(trip.begin(), trip.end());

        build_frames();
    }

    // Per-vertex tangent frames: order the incident corners into a fan, scale
    // cumulative angles by 2π/total, take the first edge as zero direction.
    // delta_[t][i] is the chart angle of vertex i's frame direction inside
    // triangle t's flattening.
    void build_frames() {
        std::vector<std::map<int, std::pair<int, int>>> out_edge(n_);  // v -> (next vertex -> (tri, corner))
        for (int t = 0; t < nt_; ++t)
            for (int i = 0; i < 3; ++i) out_edge[tris_[t][i]][tris_[t][(i + 1) % 3]] = {t, i};

        delta_.assign(nt_, {});
        for (int v = 0; v < n_; ++v) {
            // walk the fan: inside triangle t at corner i, the next outgoing
            // edge (counterclockwise) is v -> third vertex of t
            int t0 = out_edge[v].begin()->second.first;
            int i0 = out_edge[v].begin()->second.second;
            double total = 0.0;
            std::vector<std::tuple<int, int, double>> fan;  // (tri, corner, start angle)
            int t = t0, i = i0;
            int guard = 0;
            do {
                fan.emplace_back(t, i, total);
                total += corner_angle_[t][i];
                int w = tris_[t][(i + 2) % 3];  // next outgoing edge target
                auto it = out_edge[v].find(w);
                require(it != out_edge[v].end(), "mesh factor: broken vertex fan");
                t = it->second.first;
                i = it->second.second;
                require(++guard < 10000, "mesh factor: vertex fan does not close");
            } while (!(t == t0 && i == i0));
            double scale = 2.0 * kPi / total;
            for (auto& [tt, ii, start] : fan) {
                // frame angle of edge (v -> next) is start*scale; its chart angle:
                cplx e = chart_[tt][(ii + 1) % 3] - chart_[tt][ii];
                delta_[tt][ii] = std::arg(e) - start * scale;
            }
        }
    }

    /// Newton solve of Scal(e^u · raw) = target: Scal_raw + lap_raw(u) = target·e^u.
    void uniformize_reference(double target) {
        require(target < 0, "mesh factor: genus >= 2 needs a negative target curvature");
        Vec u = Vec::Zero(n_);
        Eigen::SimplicialLDLT<SpD> solver;
        for (int it = 0; it < 60; ++it) {
            Vec lap_u = (stiff_raw_ * u.matrix()).array() / (2.0 * w_raw_);
            Vec resid = scal_raw_ + lap_u - target * u.exp();
            if (resid.abs().maxCoeff() < 1e-12) break;
            // Jacobian: lap_raw - target·diag(e^u), SPD since target < 0;
            // assemble in weighted form K/2 - diag(2 w target e^u)... times w
            SpD J = stiff_raw_;
            Vec diag = -2.0 * w_raw_ * target * u.exp();
            for (int i = 0; i < n_; ++i) J.coeffRef(i, i) += diag[i];
            solver.compute(J);
            require(solver.info() == Eigen::Success, "mesh factor: uniformization solve failed");
            Vec step = solver.solve((2.0 * w_raw_ * resid).matrix()).array();
            u -= step;
        }
        lam_ = u.exp();
        Vec lap_u = (stiff_raw_ * u.matrix()).array() / (2.0 * w_raw_);
        scal_ref_ = (scal_raw_ + lap_u) / lam_;
        require((scal_ref_ - target).abs().maxCoeff() < 1e-9,
                "mesh factor: uniformization did not converge");
        weights_ = w_raw_ * lam_;
        area_ = weights_.sum();
        stiff_half_ = 0.5 * stiff_raw_;
        lam_form_ = Vec(nt_);
        for (int t = 0; t < nt_; ++t)
            lam_form_[t] = (lam_[tris_[t][0]] + lam_[tris_[t][1]] + lam_[tris_[t][2]]) / 3.0;
        form_weights_ = tri_area_raw_ * lam_form_;
    }

    void build_operators() {
        std::vector<Eigen::Triplet<cplx>> tz, tzb, tfz, tfzb, tT;
        Vec asum = Vec::Zero(n_);
        for (int t = 0; t < nt_; ++t)
            for (int i = 0; i < 3; ++i) asum[tris_[t][i]] += tri_area_raw_[t];
        for (int t = 0; t < nt_; ++t) {
            // G[j] is the complex representative of ∇ψ_j in the triangle chart
            std::array<cplx, 3> G;
            for (int j = 0; j < 3; ++j) {
                cplx e = chart_[t][(j + 2) % 3] - chart_[t][(j + 1) % 3];
                G[j] = cplx(0, 1) * e / (2.0 * tri_area_raw_[t]);
            }
            // the flat triangle chart has Kahler density 1/2, so unit frames
            // against the canonical metric carry sqrt(2/λ)
            const double rt2 = std::sqrt(2.0);
            double sl = std::sqrt(lam_form_[t]);
            for (int j = 0; j < 3; ++j) {
                int vj = tris_[t][j];
                // form-valued derivatives in the triangle chart, canonical frames
                tfz.emplace_back(t, vj, rt2 * std::conj(G[j]) / (2.0 * sl));
                tfzb.emplace_back(t, vj, rt2 * G[j] / (2.0 * sl));
                // ∂̄ on tangent sections: corner values rotated into the chart
                tT.emplace_back(t, vj, rt2 * G[j] / 2.0 * std::exp(cplx(0, delta_[t][j])) /
                                           std::sqrt(lam_[vj]));
            }
            // vertex-valued derivatives: area-weighted average over incident
            // triangles of the chart value rotated into the vertex frame
            for (int i = 0; i < 3; ++i) {
                int vi = tris_[t][i];
                double wgt = tri_area_raw_[t] / asum[vi];
                cplx rot = std::exp(cplx(0, delta_[t][i]));
                double slv = std::sqrt(lam_[vi]);
                for (int j = 0; j < 3; ++j) {
                    int vj = tris_[t][j];
                    tz.emplace_back(vi, vj, rt2 * wgt * rot * std::conj(G[j]) / (2.0 * slv));
                    tzb.emplace_back(vi, vj, rt2 * wgt * std::conj(rot) * G[j] / (2.0 * slv));
                }
            }
        }
        auto build = [&](std::vector<Eigen::Triplet<cplx>>& tr, int rows) {
            SpC s(rows, n_);
            s.setFromTriplets(tr.begin(), tr.end());
            return s;
        };
        dz_vert_ = build(tz, n_);
        dzbar_vert_ = build(tzb, n_);
        dz_form_ = build(tfz, nt_);
        dzbar_form_ = build(tfzb, nt_);
        dzbar_T_form_ = build(tT, nt_);
        dz_vert_adj_ = dz_vert_.adjoint();
        dzbar_vert_adj_ = dzbar_vert_.adjoint();
        dz_form_adj_ = dz_form_.adjoint();
        dzbar_form_adj_ = dzbar_form_.adjoint();
        dzbar_T_form_adj_ = dzbar_T_form_.adjoint();
    }

    void build_eigenbasis() {
        Vec isqw = weights_.sqrt().inverse();
        Mat dense = Mat(stiff_half_);
        Mat B = isqw.matrix().asDiagonal() * dense * isqw.matrix().asDiagonal();
        Eigen::SelfAdjointEigenSolver<Mat> es(B);
        require(es.info() == Eigen::Success, "mesh factor: eigendecomposition failed");
        eigenvalues_ = es.eigenvalues().array().max(0.0);
        eigenvalues_[0] = 0.0;
        eigvecs_ = isqw.matrix().asDiagonal() * es.eigenvectors();
    }

    /// adjoint of a sparse operator w.r.t. weighted inner products:
    /// A* = W_in^{-1} A^H W_out
    static CMat weighted_adjoint(const SpC& a_hermitian, const CMat& g, const Vec& w_out,
                                 const Vec& w_in) {
        CMat wg = g;
        wg.array().colwise() *= w_out.cast<cplx>();
        CMat out = a_hermitian * wg;
        out.array().colwise() /= w_in.cast<cplx>();
        return out;
    }

    int n_ = 0, nt_ = 0, genus_ = 0;
    double area_ = 0;
    std::vector<std::array<int, 3>> tris_;
    std::vector<std::array<double, 3>> corner_angle_;
    std::vector<std::array<cplx, 3>> chart_;
    std::vector<std::array<double, 3>> delta_;
    Vec tri_area_raw_, w_raw_, scal_raw_, lam_, lam_form_;
    Vec weights_, form_weights_, scal_ref_, eigenvalues_;
    SpD stiff_raw_, stiff_half_;
    SpC dz_vert_, dzbar_vert_, dz_form_, dzbar_form_, dzbar_T_form_;
    SpC dz_vert_adj_, dzbar_vert_adj_, dz_form_adj_, dzbar_form_adj_, dzbar_T_form_adj_;
    Mat eigvecs_;
};

}  // namespace cscklab
