#include "chordalverify/qcbuild.hpp"

#include <cmath>
#include <stdexcept>

namespace chordalverify::qcbuild {

using Eigen::MatrixXd;
using Eigen::SparseMatrix;
using Eigen::VectorXd;
using Triplet = Eigen::Triplet<double>;

Eigen::MatrixXd AffineMatrixMap::evaluate(const VectorXd& gamma) const {
  if (gamma.size() != param_count())
    throw std::invalid_argument("evaluate: gamma length " + std::to_string(gamma.size()) +
                                " != parameter count " + std::to_string(param_count()));
  MatrixXd Z = MatrixXd::Zero(dim, dim);
  for (int k = 0; k < base.outerSize(); ++k)
    for (SparseMatrix<double>::InnerIterator it(base, k); it; ++it)
      Z(it.row(), it.col()) += it.value();
  for (int i = 0; i < param_count(); ++i) {
    const double g = gamma[i];
    if (g == 0.0) continue;
    for (int k = 0; k < basis[i].outerSize(); ++k)
      for (SparseMatrix<double>::InnerIterator it(basis[i], k); it; ++it)
        Z(it.row(), it.col()) += g * it.value();
  }
  return Z;
}

AffineMatrixMap AffineMatrixMap::zero(int dim) {
  AffineMatrixMap map;
  map.dim = dim;
  map.base = SparseMatrix<double>(dim, dim);
  return map;
}

AffineMatrixMap congruence(const AffineMatrixMap& map, const SparseMatrix<double>& G) {
  if (G.rows() != map.dim)
    throw std::invalid_argument("congruence: G has " + std::to_string(G.rows()) +
                                " rows, map dimension is " + std::to_string(map.dim));
  const SparseMatrix<double> Gt = G.transpose();
  AffineMatrixMap out;
  out.dim = static_cast<int>(G.cols());
  const auto transform = [&](const SparseMatrix<double>& M) {
    SparseMatrix<double> R = Gt * (M * G).eval();
    R.prune(0.0);
    return R;
  };
  out.base = transform(map.base);
  out.basis.reserve(map.basis.size());
  for (const auto& M : map.basis) out.basis.push_back(transform(M));
  out.nneg_mask = map.nneg_mask;
  return out;
}

AffineMatrixMap add_maps(const AffineMatrixMap& a, const AffineMatrixMap& b) {
  if (a.dim != b.dim) throw std::invalid_argument("add_maps: dimensions differ");
  AffineMatrixMap out;
  out.dim = a.dim;
  out.base = a.base + b.base;
  out.basis = a.basis;
  out.basis.insert(out.basis.end(), b.basis.begin(), b.basis.end());
  out.nneg_mask = a.nneg_mask;
  out.nneg_mask.insert(out.nneg_mask.end(), b.nneg_mask.begin(), b.nneg_mask.end());
  return out;
}

InputSpec InputSpec::make_box(const VectorXd& lo, const VectorXd& hi) {
  if (lo.size() != hi.size()) throw std::invalid_argument("box: lo/hi lengths differ");
  if ((lo.array() > hi.array()).any()) throw std::invalid_argument("box: lo exceeds hi");
  InputSpec spec;
  spec.kind = Kind::box;
  spec.lo = lo;
  spec.hi = hi;
  return spec;
}

InputSpec InputSpec::make_polytope(const MatrixXd& H, const VectorXd& h) {
  if (H.rows() != h.size()) throw std::invalid_argument("polytope: H rows != h length");
  InputSpec spec;
  spec.kind = Kind::polytope;
  spec.H = H;
  spec.h = h;
  return spec;
}

int InputSpec::dim() const {
  return kind == Kind::box ? static_cast<int>(lo.size()) : static_cast<int>(H.cols());
}

MatrixXd InputSpec::polytope_H() const {
  if (kind == Kind::polytope) return H;
  const int n = static_cast<int>(lo.size());
  MatrixXd Hb(2 * n, n);
  Hb.topRows(n) = MatrixXd::Identity(n, n);
  Hb.bottomRows(n) = -MatrixXd::Identity(n, n);
  return Hb;
}

VectorXd InputSpec::polytope_h() const {
  if (kind == Kind::polytope) return h;
  VectorXd hb(2 * lo.size());
  hb.head(lo.size()) = hi;
  hb.tail(lo.size()) = -lo;
  return hb;
}

AffineMatrixMap input_qc(const InputSpec& spec) {
  const MatrixXd H = spec.polytope_H();
  const VectorXd h = spec.polytope_h();
  const int q = static_cast<int>(H.rows());
  const int n1 = static_cast<int>(H.cols());

  AffineMatrixMap map = AffineMatrixMap::zero(n1 + 1);
  // one parameter per upper-triangle entry of Lambda, row-major
  for (int r = 0; r < q; ++r) {
    for (int c = r; c < q; ++c) {
      MatrixXd Lam = MatrixXd::Zero(q, q);
      Lam(r, c) = 1.0;
      Lam(c, r) = 1.0;
      MatrixXd P(n1 + 1, n1 + 1);
      P.topLeftCorner(n1, n1) = H.transpose() * Lam * H;
      P.topRightCorner(n1, 1) = -H.transpose() * Lam * h;
      P.bottomLeftCorner(1, n1) = P.topRightCorner(n1, 1).transpose();
      P(n1, n1) = h.dot(Lam * h);
      SparseMatrix<double> Ps = P.sparseView(0.0, 0.0);
      map.basis.push_back(std::move(Ps));
      map.nneg_mask.push_back(true);
    }
  }
  return map;
}

std::pair<double, double> sector_constants(nnmodel::Activation) {
  return {0.0, 1.0};  // relu, tanh, sigmoid are all [0, 1]-sector bounded
}

AffineMatrixMap sector_qc(int n, int beta, nnmodel::Activation act) {
  const auto [a, b] = sector_constants(act);
  return sector_qc(n, beta, a, b);
}

AffineMatrixMap sector_qc(int n, int beta, double a, double b) {
  if (n < 1) throw std::invalid_argument("sector_qc: n must be >= 1");
  if (beta < 0 || beta > n - 1)
    throw std::out_of_range("sector_qc: beta " + std::to_string(beta) + " not in [0, " +
                            std::to_string(n - 1) + "]");
  AffineMatrixMap map = AffineMatrixMap::zero(2 * n + 1);

  // blocks of Q for a rank-one T-term sum_{(ti,tj)} val * e_ti e_tj^T
  const auto push_T_term = [&](const std::vector<std::pair<int, int>>& support) {
    std::vector<Triplet> t;
    for (const auto& [ti, tj] : support) {
      const double val = ti == tj ? 1.0 : -1.0;  // Delta_ij outer product
      if (a * b != 0.0) t.emplace_back(ti, tj, -2.0 * a * b * val);
      if (a + b != 0.0) {
        t.emplace_back(ti, n + tj, (a + b) * val);
        t.emplace_back(n + ti, tj, (a + b) * val);
      }
      t.emplace_back(n + ti, n + tj, -2.0 * val);
    }
    SparseMatrix<double> Q(2 * n + 1, 2 * n + 1);
    Q.setFromTriplets(t.begin(), t.end());
    map.basis.push_back(std::move(Q));
    map.nneg_mask.push_back(true);
  };

  for (int i = 0; i < n; ++i) push_T_term({{i, i}});
  for (int d = 1; d <= beta; ++d)
    for (int i = 0; i + d < n; ++i) {
      const int j = i + d;
      push_T_term({{i, i}, {j, j}, {i, j}, {j, i}});
    }
  return map;
}

namespace {

Eigen::SparseMatrix<double> stacked_selectors_1a(const chordal::DimProfile& profile) {
  const int n1 = profile.dims[0], N = profile.N();
  SparseMatrix<double> G(n1 + 1, N + 1);
  std::vector<Triplet> t;
  for (int i = 0; i < n1; ++i) t.emplace_back(i, i, 1.0);
  t.emplace_back(n1, N, 1.0);
  G.setFromTriplets(t.begin(), t.end());
  return G;
}

Eigen::SparseMatrix<double> stacked_system_matrix(const nnmodel::StackedSystem& sys) {
  const int n = static_cast<int>(sys.A.rows());
  const int N = sys.N;
  SparseMatrix<double> G(2 * n + 1, N + 1);
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < N; ++j) {
      if (sys.A(i, j) != 0.0) t.emplace_back(i, j, sys.A(i, j));
      if (sys.B(i, j) != 0.0) t.emplace_back(n + i, j, sys.B(i, j));
    }
  for (int i = 0; i < n; ++i)
    if (sys.b[i] != 0.0) t.emplace_back(i, N, sys.b[i]);
  t.emplace_back(2 * n, N, 1.0);
  G.setFromTriplets(t.begin(), t.end());
  return G;
}

}  // namespace

AffineMatrixMap build_Zin(const AffineMatrixMap& P, const chordal::DimProfile& profile) {
  if (P.dim != profile.dims[0] + 1)
    throw std::invalid_argument("build_Zin: P dimension != n_1 + 1");
  return congruence(P, stacked_selectors_1a(profile));
}

AffineMatrixMap build_Zac(const AffineMatrixMap& Q, const nnmodel::StackedSystem& sys) {
  const int n = static_cast<int>(sys.A.rows());
  if (Q.dim != 2 * n + 1)
    throw std::invalid_argument("build_Zac: Q dimension " + std::to_string(Q.dim) +
                                " != 2(N - n_1) + 1 = " + std::to_string(2 * n + 1));
  return congruence(Q, stacked_system_matrix(sys));
}

AffineMatrixMap adjacent_qc(const nnmodel::LayerBounds& bounds, const nnmodel::Network& net,
                            int k) {
  const int K = net.num_layers();
  if (k < 1 || k > K - 1) throw std::out_of_range("adjacent_qc: k not in [1, K-1]");
  if (static_cast<int>(bounds.post_lo.size()) < k)
    throw std::invalid_argument("adjacent_qc: bounds missing for layer " + std::to_string(k + 1));
  const VectorXd& lo = bounds.post_lo[k - 1];
  const VectorXd& hi = bounds.post_hi[k - 1];
  const int n_next = static_cast<int>(lo.size());

  AffineMatrixMap map = AffineMatrixMap::zero(2 * n_next + 1);
  const int last = 2 * n_next;
  for (int i = 0; i < n_next; ++i) {
    std::vector<Triplet> t;
    t.emplace_back(n_next + i, n_next + i, -1.0);
    const double mid = 0.5 * (lo[i] + hi[i]);
    if (mid != 0.0) {
      t.emplace_back(n_next + i, last, mid);
      t.emplace_back(last, n_next + i, mid);
    }
    if (lo[i] * hi[i] != 0.0) t.emplace_back(last, last, -lo[i] * hi[i]);
    SparseMatrix<double> Q(2 * n_next + 1, 2 * n_next + 1);
    Q.setFromTriplets(t.begin(), t.end());
    map.basis.push_back(std::move(Q));
    map.nneg_mask.push_back(true);
  }
  return map;
}

AffineMatrixMap lift_adjacent(const std::vector<AffineMatrixMap>& Q_layers,
                              const nnmodel::StackedSystem& sys,
                              const chordal::DimProfile& profile) {
  const int K = profile.K();
  if (static_cast<int>(Q_layers.size()) != K - 1)
    throw std::invalid_argument("lift_adjacent: expected K-1 = " + std::to_string(K - 1) +
                                " layer maps, got " + std::to_string(Q_layers.size()));
  const int n = static_cast<int>(sys.A.rows());
  AffineMatrixMap out = AffineMatrixMap::zero(2 * n + 1);
  for (int k = 1; k <= K - 1; ++k) {
    const int n_next = profile.dims[k];
    if (Q_layers[k - 1].dim != 2 * n_next + 1)
      throw std::invalid_argument("lift_adjacent: layer " + std::to_string(k) +
                                  " map has wrong dimension");
    // P_k selects (W_k x_k + b_k, x_{k+1}, 1) out of (Ax + b, Bx, 1)
    const int offset = profile.S(k) - profile.dims[0];
    SparseMatrix<double> P(2 * n_next + 1, 2 * n + 1);
    std::vector<Triplet> t;
    for (int r = 0; r < n_next; ++r) {
      t.emplace_back(r, offset + r, 1.0);
      t.emplace_back(n_next + r, n + offset + r, 1.0);
    }
    t.emplace_back(2 * n_next, 2 * n, 1.0);
    P.setFromTriplets(t.begin(), t.end());
    out = add_maps(out, congruence(Q_layers[k - 1], P));
  }
  return out;
}

SafetyMatrix safety_l2gain(double kappa, int n1, int m) {
  if (kappa < 0.0) throw std::invalid_argument("safety_l2gain: kappa must be >= 0");
  SafetyMatrix out;
  out.S = MatrixXd::Zero(n1 + m + 1, n1 + m + 1);
  out.S.topLeftCorner(n1, n1) = -kappa * MatrixXd::Identity(n1, n1);
  out.S.block(n1, n1, m, m).setIdentity();
  return out;
}

SafetyMatrix safety_ellipsoid(const MatrixXd& P_shape, const VectorXd& y_c, double rho, int n1) {
  const int m = static_cast<int>(y_c.size());
  if (P_shape.rows() != m || P_shape.cols() != m)
    throw std::invalid_argument("safety_ellipsoid: P_shape must be m x m");
  Eigen::FullPivLU<MatrixXd> lu(P_shape);
  if (!lu.isInvertible()) throw std::invalid_argument("safety_ellipsoid: P_shape is singular");
  const MatrixXd Pinv = lu.inverse();
  const MatrixXd M = Pinv.transpose() * Pinv;

  SafetyMatrix out;
  out.S = MatrixXd::Zero(n1 + m + 1, n1 + m + 1);
  out.S.block(n1, n1, m, m) = M;
  out.S.block(n1, n1 + m, m, 1) = -M * y_c;
  out.S.block(n1 + m, n1, 1, m) = out.S.block(n1, n1 + m, m, 1).transpose();
  out.S(n1 + m, n1 + m) = y_c.dot(M * y_c) - rho;
  out.rho_slot = std::make_pair(n1 + m, n1 + m);
  return out;
}

Eigen::SparseMatrix<double> build_Zout(const SafetyMatrix& safety, const nnmodel::Network& net) {
  const int n1 = net.input_dim(), m = net.output_dim();
  const int nK = static_cast<int>(net.weights.back().cols());
  if (safety.S.rows() != n1 + m + 1)
    throw std::invalid_argument("build_Zout: S dimension != n_1 + m + 1");
  const chordal::DimProfile profile = chordal::DimProfile::of(net);
  const int N = profile.N();

  MatrixXd R = MatrixXd::Zero(n1 + m + 1, n1 + nK + 1);
  R.topLeftCorner(n1, n1).setIdentity();
  R.block(n1, n1, m, nK) = net.weights.back();
  R.block(n1, n1 + nK, m, 1) = net.biases.back();
  R(n1 + m, n1 + nK) = 1.0;
  const MatrixXd inner = R.transpose() * safety.S * R;

  // V = [E_1; E_K; E_a]
  SparseMatrix<double> V(n1 + nK + 1, N + 1);
  std::vector<Triplet> t;
  for (int i = 0; i < n1; ++i) t.emplace_back(i, i, 1.0);
  const int offK = profile.S(profile.K() - 1);
  for (int i = 0; i < nK; ++i) t.emplace_back(n1 + i, offK + i, 1.0);
  t.emplace_back(n1 + nK, N, 1.0);
  V.setFromTriplets(t.begin(), t.end());

  SparseMatrix<double> Z = V.transpose() * inner.sparseView(0.0, 0.0) * V;
  Z.prune(0.0);
  return Z;
}

int ParamLayout::band_offset(int d) const {
  int off = n_input + n;
  for (int e = 1; e < d; ++e) off += band_count(e);
  return off;
}

int ParamLayout::adjacent_offset() const {
  int off = n_input + n;
  for (int d = 1; d <= beta; ++d) off += band_count(d);
  return off;
}

int ParamLayout::total() const { return adjacent_offset() + n_adjacent; }

ZAssembly assemble_Z(const nnmodel::Network& net, const InputSpec& input,
                     const SafetyMatrix& safety, int beta, bool use_adjacent,
                     const nnmodel::LayerBounds* bounds) {
  net.validate();
  if (input.dim() != net.input_dim())
    throw std::invalid_argument("assemble_Z: input spec dimension != n_1");
  if (use_adjacent && bounds == nullptr)
    throw std::invalid_argument("assemble_Z: adjacent QCs need layer bounds");
  const chordal::DimProfile profile = chordal::DimProfile::of(net);
  const int n = profile.N() - profile.dims[0];
  const nnmodel::StackedSystem sys = stacked_system(net);

  AffineMatrixMap Zin = build_Zin(input_qc(input), profile);
  AffineMatrixMap Q = sector_qc(n, beta, net.activation);
  if (use_adjacent) {
    std::vector<AffineMatrixMap> layer_qcs;
    for (int k = 1; k <= profile.K() - 1; ++k)
      layer_qcs.push_back(adjacent_qc(*bounds, net, k));
    Q = add_maps(Q, lift_adjacent(layer_qcs, sys, profile));
  }

  ZAssembly out;
  out.zmap = add_maps(Zin, build_Zac(Q, sys));
  out.zmap.base = out.zmap.base + build_Zout(safety, net);
  out.zmap.base.prune(0.0);
  out.layout.n_input = Zin.param_count();
  out.layout.n = n;
  out.layout.beta = beta;
  out.layout.n_adjacent = use_adjacent ? n : 0;
  if (out.layout.total() != out.zmap.param_count())
    throw std::logic_error("assemble_Z: parameter layout mismatch");
  return out;
}

Eigen::VectorXd embed_gamma(const VectorXd& gamma, const ParamLayout& from,
                            const ParamLayout& to) {
  if (from.n_input != to.n_input || from.n != to.n || from.n_adjacent != to.n_adjacent ||
      from.beta > to.beta)
    throw std::invalid_argument("embed_gamma: layouts are not nested");
  if (gamma.size() != from.total()) throw std::invalid_argument("embed_gamma: gamma length");
  VectorXd out = VectorXd::Zero(to.total());
  out.head(from.n_input + from.n) = gamma.head(from.n_input + from.n);
  for (int d = 1; d <= from.beta; ++d)
    out.segment(to.band_offset(d), to.band_count(d)) =
        gamma.segment(from.band_offset(d), from.band_count(d));
  out.tail(to.n_adjacent) = gamma.tail(from.n_adjacent);
  return out;
}

}  // namespace chordalverify::qcbuild
