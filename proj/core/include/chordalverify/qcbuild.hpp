#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <optional>
#include <utility>
#include <vector>

#include "chordalverify/chordal.hpp"
#include "chordalverify/nnmodel.hpp"

namespace chordalverify::qcbuild {

// Symmetric-matrix-valued affine function gamma -> base + sum_i gamma_i * basis[i].
// Basis matrices are stored sparse (both triangles). nneg_mask marks the
// parameters constrained to the nonnegative cone.
struct AffineMatrixMap {
  int dim = 0;
  Eigen::SparseMatrix<double> base;
  std::vector<Eigen::SparseMatrix<double>> basis;
  std::vector<bool> nneg_mask;

  int param_count() const { return static_cast<int>(basis.size()); }
  Eigen::MatrixXd evaluate(const Eigen::VectorXd& gamma) const;
  static AffineMatrixMap zero(int dim);
};

// G^T M G applied to base and every basis matrix; G has map.dim rows.
AffineMatrixMap congruence(const AffineMatrixMap& map, const Eigen::SparseMatrix<double>& G);
// Same dimension; bases add, parameter lists concatenate (a first).
AffineMatrixMap add_maps(const AffineMatrixMap& a, const AffineMatrixMap& b);

struct InputSpec {
  enum class Kind { box, polytope };
  Kind kind = Kind::box;
  Eigen::VectorXd lo, hi;  // box
  Eigen::MatrixXd H;       // polytope {x : Hx <= h}
  Eigen::VectorXd h;

  static InputSpec make_box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);
  static InputSpec make_polytope(const Eigen::MatrixXd& H, const Eigen::VectorXd& h);
  int dim() const;
  // Box converts to H = [I; -I], h = [hi; -lo].
  Eigen::MatrixXd polytope_H() const;
  Eigen::VectorXd polytope_h() const;
};

// P(gamma_in) = [H^T Lam H, -H^T Lam h; -h^T Lam H, h^T Lam h], Lam symmetric with
// nonnegative entries drawn from gamma_in (upper triangle, row-major). Over S^{n_1+1}.
AffineMatrixMap input_qc(const InputSpec& spec);

// Sector bounds (a, b) for the activation; all three are [0, 1].
std::pair<double, double> sector_constants(nnmodel::Activation act);

// Q_sec over S^{2n+1} with the beta-banded T; parameters are lambda_ii (i = 1..n)
// followed by lambda_ij grouped by offset d = j - i = 1..beta. q13/q23/q33 are zero.
AffineMatrixMap sector_qc(int n, int beta, nnmodel::Activation act);
AffineMatrixMap sector_qc(int n, int beta, double a, double b);

// Congruence with [E_1; E_a]: lifts P to Z_in over S^{N+1}.
AffineMatrixMap build_Zin(const AffineMatrixMap& P, const chordal::DimProfile& profile);

// Congruence with [A b; B 0; 0 1]: lifts Q to Z_ac over S^{N+1}.
AffineMatrixMap build_Zac(const AffineMatrixMap& Q, const nnmodel::StackedSystem& sys);

// Box QC on x_{k+1}: nu -> Q_k over S^{2 n_{k+1} + 1} encoding
// (x_{k+1} - lo)^T diag(nu) (hi - x_{k+1}) >= 0. k is 1-based in [1, K-1].
AffineMatrixMap adjacent_qc(const nnmodel::LayerBounds& bounds, const nnmodel::Network& net,
                            int k);

// Q_adj = sum_k P_k^T Q_k P_k over S^{2(N-n_1)+1}, with P_k selecting
// (W_k x_k + b_k, x_{k+1}, 1) out of (Ax+b, Bx, 1).
AffineMatrixMap lift_adjacent(const std::vector<AffineMatrixMap>& Q_layers,
                              const nnmodel::StackedSystem& sys,
                              const chordal::DimProfile& profile);

// Safe set is {(x, y) : [x; y; 1]^T S [x; y; 1] <= 0}.
struct SafetyMatrix {
  Eigen::MatrixXd S;  // (n_1 + m + 1) square
  std::optional<std::pair<int, int>> rho_slot;  // 0-based entry carrying -rho
};

// S = diag(-kappa I_{n_1}, I_m, 0): ||y||^2 <= kappa ||x||^2.
SafetyMatrix safety_l2gain(double kappa, int n1, int m);
// ||P_shape^{-1}(y - y_c)||^2 - rho; rho_slot marks the (last, last) entry.
SafetyMatrix safety_ellipsoid(const Eigen::MatrixXd& P_shape, const Eigen::VectorXd& y_c,
                              double rho, int n1);

// Constant Z_out over S^{N+1} from the congruence with [I 0 0; 0 W_K b_K; 0 0 1]
// and [E_1; E_K; E_a].
Eigen::SparseMatrix<double> build_Zout(const SafetyMatrix& S, const nnmodel::Network& net);

// Offsets of the concatenated parameter vector gamma = (gamma_in, gamma_ac)
// with gamma_ac = (lambda_diag, lambda_band d=1..beta, nu_adjacent).
struct ParamLayout {
  int n_input = 0;
  int n = 0;  // N - n_1
  int beta = 0;
  int n_adjacent = 0;  // 0 when adjacent QCs are off, else n

  int band_count(int d) const { return std::max(0, n - d); }
  int sector_offset() const { return n_input; }
  int band_offset(int d) const;  // start of the d-band group, d in [1, beta]
  int adjacent_offset() const;
  int total() const;
};

struct ZAssembly {
  AffineMatrixMap zmap;  // over S^{N+1}; base = Z_out
  ParamLayout layout;
};

// Z(gamma) = Z_in + Z_ac + Z_out with Q = Q_sec (+ Q_adj when use_adjacent).
ZAssembly assemble_Z(const nnmodel::Network& net, const InputSpec& input,
                     const SafetyMatrix& safety, int beta, bool use_adjacent,
                     const nnmodel::LayerBounds* bounds = nullptr);

// Embeds a certificate across band widths: layouts must agree except beta
// (from.beta <= to.beta); new band parameters are zero, so Z(gamma) is unchanged.
Eigen::VectorXd embed_gamma(const Eigen::VectorXd& gamma, const ParamLayout& from,
                            const ParamLayout& to);

}  // namespace chordalverify::qcbuild
