#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "chordalverify/sdpcore.hpp"

namespace chordalverify::admm {

struct AdmmOptions {
  double rho = 1.0;          // penalty
  int max_iter = 20000;
  double eps_primal = 1e-7;  // on max_k ||z_k - v_k||_inf (normalized problem)
  double eps_dual = 1e-7;    // on rho * max_k ||z_k^{t+1} - z_k^{t}||_inf
  int check_every = 25;
  double final_tol = 1e-6;   // lambda_max gate for the dense certificate check
  bool adapt_rho = true;     // residual balancing: x2 / /2 when ratio exceeds 10
  int jobs = 1;              // threads for per-block projections
  bool final_certificate_check = true;  // attempt certification at max_iter
  // Diagonal shift (normalized units) of the solved problem: iterate toward
  // Z(gamma) <= -margin*I so the limit is strictly inside the true feasible
  // set instead of on its boundary, where the lambda_max gate cannot pass.
  // Adds a floor of about margin/4 to the certifiable reach radius.
  double feasibility_margin = 1e-6;
  std::string trace_path;    // optional CSV: iter,primal_res,dual_res,lambda_max_estimate
};

enum class SolveStatus { certified, max_iter_reached, diverged };
const char* to_string(SolveStatus s);

struct Solution {
  Eigen::VectorXd gamma;
  SolveStatus status = SolveStatus::max_iter_reached;
  double lambda_max = std::numeric_limits<double>::quiet_NaN();
  int iters = 0;
  double wall_time = 0.0;  // seconds
  double primal_res = std::numeric_limits<double>::quiet_NaN();
  double dual_res = std::numeric_limits<double>::quiet_NaN();
};

// Frobenius-nearest negative-semidefinite matrix (eigenvalue clamping).
Eigen::MatrixXd project_nsd(const Eigen::MatrixXd& M);

// Cached applicator for x = -(D + rho J J^T)^+ r. When D > 0 the pseudoinverse
// equals the inverse and is applied through the Woodbury identity with a sparse
// LDLT of rho^{-1} I + J^T D^{-1} J; otherwise (or on request) it is realized
// by a dense symmetric eigendecomposition with relative cutoff 1e-9.
class KktCache {
 public:
  enum class Strategy { automatic, woodbury, dense_eig };

  KktCache(Eigen::VectorXd D, Eigen::SparseMatrix<double> J, double rho,
           Strategy strategy = Strategy::automatic);

  Eigen::VectorXd apply(const Eigen::VectorXd& r) const;
  // Also returns the pre-projection gamma = -rho J^T x of the KKT solution.
  Eigen::VectorXd apply(const Eigen::VectorXd& r, Eigen::VectorXd& gamma_pre) const;
  void set_rho(double rho);  // refactor with the cached pattern
  double rho() const { return rho_; }
  Strategy strategy() const { return strategy_; }

 private:
  void factorize();

  Eigen::VectorXd D_, Dinv_;
  Eigen::SparseMatrix<double> J_;
  double rho_ = 1.0;
  Strategy strategy_ = Strategy::automatic;
  // woodbury
  Eigen::SparseMatrix<double> JtDinvJ_;
  std::shared_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> ldlt_;
  // dense_eig
  Eigen::MatrixXd eigvecs_;
  Eigen::VectorXd pinv_eigvals_;
};

KktCache precompute(const sdpcore::VecOps& ops, double rho,
                    KktCache::Strategy strategy = KktCache::Strategy::automatic);

// Iterates (gamma, v) -> z -> lambda; per-block vectors are column-major vecs
// over the solver blocks. g/eta are the slack and dual of the dualized
// gamma >= 0 constraint used by solve().
struct AdmmState {
  Eigen::VectorXd gamma;  // normalized coordinates during a solve
  std::vector<Eigen::VectorXd> v, z, lambda, z_prev;
  Eigen::VectorXd x;
  Eigen::VectorXd g, eta, g_prev;
  int iter = 0;
};
AdmmState zero_state(const sdpcore::VecOps& ops);

// One gamma/v update against the given z0 (z_beta,0 in vec coordinates).
void update_gamma_v(AdmmState& state, const KktCache& cache, const sdpcore::VecOps& ops,
                    const Eigen::VectorXd& z0, const std::vector<bool>& nneg_mask);
// z_k = vec(Pi_NSD(mat(v_k - rho^{-1} lambda_k))); returns max block eigenvalue seen.
double update_z(AdmmState& state, const sdpcore::VecOps& ops, double rho, int jobs = 1);
// lambda_k += rho (z_k - v_k)
void update_lambda(AdmmState& state, double rho);

// Normalized problem data reusable across solves that differ only in z0
// (e.g. bisection over the reachability radius). The solver works on the
// diagonally equilibrated congruence D Z(gamma) D (Ruiz scaling, gamma and
// semidefiniteness unchanged), divided by a global scale s, with J columns
// normalized to unit length (c_i gamma_i are the internal parameters).
struct Prepared {
  sdpcore::VecOps ops;         // built from the equilibrated, normalized map
  Eigen::VectorXd col_scale;   // c_i > 0
  Eigen::VectorXd row_scale;   // diagonal of D
  double scale = 1.0;          // s
  std::vector<bool> nneg_mask;
  const qcbuild::AffineMatrixMap* zmap = nullptr;  // original units, for certificates
};
Prepared prepare(const sdpcore::SdpProblem& problem);
Prepared prepare(const qcbuild::AffineMatrixMap& zmap,
                 const std::vector<std::vector<int>>& blocks);

// Cache for solve_prepared; built at the effective penalty rho/(1+rho) of the
// dualized scheme.
KktCache make_solver_cache(const Prepared& prep, const AdmmOptions& opts);

// Core loop; z0_scaled defaults to prep.ops.z0. warm (optional) continues from
// a previous state of identical block structure; cache (optional) must come
// from make_solver_cache or an earlier solve_prepared and carries the adapted
// penalty across calls.
Solution solve_prepared(const Prepared& prep, const AdmmOptions& opts,
                        const Eigen::VectorXd* z0_scaled = nullptr,
                        AdmmState* warm = nullptr, KktCache* cache = nullptr);

// Zero-initialized solve of a chordal/chordal2 problem (throws on dense-mode
// problems, which carry no clique decomposition).
Solution solve(const sdpcore::SdpProblem& problem, const AdmmOptions& opts);

}  // namespace chordalverify::admm
