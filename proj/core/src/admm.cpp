#include "chordalverify/admm.hpp"

#include <Eigen/Eigenvalues>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <thread>

namespace chordalverify::admm {

using Eigen::MatrixXd;
using Eigen::SparseMatrix;
using Eigen::VectorXd;
using sdpcore::VecOps;

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::certified: return "certified";
    case SolveStatus::max_iter_reached: return "max_iter_reached";
    case SolveStatus::diverged: return "diverged";
  }
  return "?";
}

Eigen::MatrixXd project_nsd(const Eigen::MatrixXd& M) {
  if (M.rows() != M.cols()) throw std::invalid_argument("project_nsd: not square");
  const MatrixXd S = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(S);
  if (eig.info() != Eigen::Success) throw std::runtime_error("project_nsd: eigensolver failed");
  const VectorXd clamped = eig.eigenvalues().cwiseMin(0.0);
  return eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
}

KktCache::KktCache(VectorXd D, SparseMatrix<double> J, double rho, Strategy strategy)
    : D_(std::move(D)), J_(std::move(J)), rho_(rho), strategy_(strategy) {
  if (rho_ <= 0.0) throw std::invalid_argument("KktCache: rho must be positive");
  if (J_.rows() != D_.size()) throw std::invalid_argument("KktCache: J rows != length of D");
  if (strategy_ == Strategy::automatic)
    strategy_ = (D_.size() > 0 && D_.minCoeff() > 0.0) ? Strategy::woodbury : Strategy::dense_eig;
  if (strategy_ == Strategy::woodbury && (D_.size() == 0 || D_.minCoeff() <= 0.0))
    throw std::invalid_argument("KktCache: woodbury needs D > 0");
  if (strategy_ == Strategy::dense_eig && D_.size() > 4000)
    throw std::invalid_argument("KktCache: dense eigendecomposition limited to n <= 4000");
  if (strategy_ == Strategy::woodbury) {
    Dinv_ = D_.cwiseInverse();
    if (J_.cols() > 0) {
      SparseMatrix<double> DinvJ = Dinv_.asDiagonal() * J_;
      JtDinvJ_ = SparseMatrix<double>(J_.transpose()) * DinvJ;
      JtDinvJ_.prune(0.0);
    }
  }
  factorize();
}

void KktCache::factorize() {
  if (strategy_ == Strategy::woodbury) {
    if (J_.cols() == 0) return;
    SparseMatrix<double> G = JtDinvJ_;
    SparseMatrix<double> I(J_.cols(), J_.cols());
    I.setIdentity();
    G += (1.0 / rho_) * I;
    if (!ldlt_) {
      ldlt_ = std::make_shared<Eigen::SimplicialLDLT<SparseMatrix<double>>>();
      ldlt_->analyzePattern(G);
    }
    ldlt_->factorize(G);
    if (ldlt_->info() != Eigen::Success)
      throw std::runtime_error("KktCache: LDLT factorization failed");
    return;
  }
  MatrixXd M = rho_ * MatrixXd(J_ * SparseMatrix<double>(J_.transpose()));
  M.diagonal() += D_;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(M);
  if (eig.info() != Eigen::Success) throw std::runtime_error("KktCache: eigensolver failed");
  eigvecs_ = eig.eigenvectors();
  const VectorXd& vals = eig.eigenvalues();
  const double cutoff = 1e-9 * vals.cwiseAbs().maxCoeff();
  pinv_eigvals_ = VectorXd::Zero(vals.size());
  for (Eigen::Index i = 0; i < vals.size(); ++i)
    if (std::abs(vals[i]) > cutoff) pinv_eigvals_[i] = 1.0 / vals[i];
}

void KktCache::set_rho(double rho) {
  if (rho <= 0.0) throw std::invalid_argument("set_rho: rho must be positive");
  if (rho == rho_) return;
  rho_ = rho;
  factorize();
}

Eigen::VectorXd KktCache::apply(const VectorXd& r) const {
  VectorXd unused;
  return apply(r, unused);
}

Eigen::VectorXd KktCache::apply(const VectorXd& r, VectorXd& gamma_pre) const {
  if (r.size() != D_.size()) throw std::invalid_argument("KktCache::apply: wrong length");
  if (strategy_ == Strategy::woodbury) {
    VectorXd u = Dinv_.cwiseProduct(r);
    if (J_.cols() == 0) {
      gamma_pre.resize(0);
      return -u;
    }
    const VectorXd t = J_.transpose() * u;
    const VectorXd w = ldlt_->solve(t);
    // gamma_pre = -rho J^T x = w for x = -(D + rho J J^T)^{-1} r
    gamma_pre = w;
    return -(u - Dinv_.cwiseProduct(J_ * w));
  }
  const VectorXd x = -(eigvecs_ *
                       pinv_eigvals_.cwiseProduct(eigvecs_.transpose() * r).eval());
  gamma_pre = -rho_ * (J_.transpose() * x);
  return x;
}

KktCache precompute(const VecOps& ops, double rho, KktCache::Strategy strategy) {
  return KktCache(ops.D, ops.J, rho, strategy);
}

AdmmState zero_state(const VecOps& ops) {
  AdmmState state;
  const int p = static_cast<int>(ops.blocks.size());
  state.gamma = VectorXd::Zero(ops.J.cols());
  state.v.resize(p);
  state.z.resize(p);
  state.lambda.resize(p);
  state.z_prev.resize(p);
  for (int k = 0; k < p; ++k) {
    const int len = ops.block_size(k) * ops.block_size(k);
    state.v[k] = VectorXd::Zero(len);
    state.z[k] = VectorXd::Zero(len);
    state.lambda[k] = VectorXd::Zero(len);
    state.z_prev[k] = VectorXd::Zero(len);
  }
  state.x = VectorXd::Zero(ops.vec_length());
  state.g = VectorXd::Zero(ops.J.cols());
  state.eta = VectorXd::Zero(ops.J.cols());
  state.g_prev = VectorXd::Zero(ops.J.cols());
  state.iter = 0;
  return state;
}

void update_gamma_v(AdmmState& state, const KktCache& cache, const VecOps& ops,
                    const VectorXd& z0, const std::vector<bool>& nneg_mask) {
  const double rho = cache.rho();
  const int p = static_cast<int>(ops.blocks.size());
  VectorXd r = -z0;
  for (int k = 0; k < p; ++k) {
    state.v[k] = state.z[k] + state.lambda[k] / rho;  // reused below as z + lambda/rho
    ops.scatter_add(k, state.v[k], r);
  }
  VectorXd gamma_pre;
  state.x = cache.apply(r, gamma_pre);
  if (gamma_pre.size() == 0) gamma_pre = VectorXd::Zero(state.gamma.size());
  for (Eigen::Index i = 0; i < gamma_pre.size(); ++i)
    state.gamma[i] = (i < static_cast<Eigen::Index>(nneg_mask.size()) && !nneg_mask[i])
                         ? gamma_pre[i]
                         : std::max(0.0, gamma_pre[i]);
  for (int k = 0; k < p; ++k) state.v[k] += ops.gather(k, state.x);
}

namespace {

// Static block partition; deterministic regardless of thread count since each
// block's output depends only on its own input.
template <typename Fn>
void for_each_block(int nblocks, int jobs, Fn&& fn) {
  if (jobs <= 1 || nblocks <= 1) {
    for (int k = 0; k < nblocks; ++k) fn(k);
    return;
  }
  const int nthreads = std::min(jobs, nblocks);
  std::vector<std::thread> threads;
  threads.reserve(nthreads);
  for (int t = 0; t < nthreads; ++t)
    threads.emplace_back([=, &fn] {
      for (int k = t; k < nblocks; k += nthreads) fn(k);
    });
  for (auto& th : threads) th.join();
}

}  // namespace

double update_z(AdmmState& state, const VecOps& ops, double rho, int jobs) {
  const int p = static_cast<int>(ops.blocks.size());
  std::vector<double> max_eig(p, 0.0);
  for_each_block(p, jobs, [&](int k) {
    const int bs = ops.block_size(k);
    Eigen::Map<const MatrixXd> V(state.v[k].data(), bs, bs);
    Eigen::Map<const MatrixXd> L(state.lambda[k].data(), bs, bs);
    MatrixXd M = V - L / rho;
    M = 0.5 * (M + M.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(M);
    if (eig.info() != Eigen::Success) {
      state.z[k].setConstant(std::numeric_limits<double>::quiet_NaN());
      return;
    }
    max_eig[k] = eig.eigenvalues().maxCoeff();
    const VectorXd clamped = eig.eigenvalues().cwiseMin(0.0);
    const MatrixXd Z = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
    state.z[k] = Eigen::Map<const VectorXd>(Z.data(), bs * bs);
  });
  double worst = -std::numeric_limits<double>::infinity();
  for (double e : max_eig) worst = std::max(worst, e);
  return worst;
}

void update_lambda(AdmmState& state, double rho) {
  for (std::size_t k = 0; k < state.z.size(); ++k)
    state.lambda[k] += rho * (state.z[k] - state.v[k]);
}

namespace {

// Ruiz equilibration of the aggregate support |base| + sum_i |Z_i| / ||Z_i||_inf:
// diagonal d with rows of diag(d) A diag(d) balanced in the infinity norm.
Eigen::VectorXd equilibration_scales(const qcbuild::AffineMatrixMap& zmap) {
  const int n = zmap.dim;
  std::vector<Eigen::Triplet<double>> t;
  const auto add_abs = [&](const SparseMatrix<double>& M, double w) {
    for (int k = 0; k < M.outerSize(); ++k)
      for (SparseMatrix<double>::InnerIterator it(M, k); it; ++it)
        t.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                       w * std::abs(it.value()));
  };
  add_abs(zmap.base, 1.0);
  for (const auto& B : zmap.basis) {
    double mx = 0.0;
    for (int k = 0; k < B.outerSize(); ++k)
      for (SparseMatrix<double>::InnerIterator it(B, k); it; ++it)
        mx = std::max(mx, std::abs(it.value()));
    if (mx > 0.0) add_abs(B, 1.0 / mx);
  }
  SparseMatrix<double> A(n, n);
  A.setFromTriplets(t.begin(), t.end());

  VectorXd d = VectorXd::Ones(n);
  for (int round = 0; round < 8; ++round) {
    VectorXd row_inf = VectorXd::Zero(n);
    for (int k = 0; k < A.outerSize(); ++k)
      for (SparseMatrix<double>::InnerIterator it(A, k); it; ++it) {
        const double v = std::abs(it.value()) * d[it.row()] * d[it.col()];
        row_inf[it.row()] = std::max(row_inf[it.row()], v);
      }
    for (int i = 0; i < n; ++i)
      if (row_inf[i] > 0.0) d[i] /= std::sqrt(row_inf[i]);
  }
  return d;
}

}  // namespace

Prepared prepare(const qcbuild::AffineMatrixMap& zmap,
                 const std::vector<std::vector<int>>& blocks) {
  Prepared prep;
  prep.zmap = &zmap;
  prep.nneg_mask = zmap.nneg_mask;
  prep.row_scale = equilibration_scales(zmap);

  qcbuild::AffineMatrixMap scaled;
  scaled.dim = zmap.dim;
  scaled.nneg_mask = zmap.nneg_mask;
  const auto congr = [&](const SparseMatrix<double>& M) {
    SparseMatrix<double> S = M;
    for (int k = 0; k < S.outerSize(); ++k)
      for (SparseMatrix<double>::InnerIterator it(S, k); it; ++it)
        it.valueRef() *= prep.row_scale[it.row()] * prep.row_scale[it.col()];
    return S;
  };
  scaled.base = congr(zmap.base);
  scaled.basis.reserve(zmap.basis.size());
  for (const auto& B : zmap.basis) scaled.basis.push_back(congr(B));

  prep.ops = sdpcore::make_vec_ops(scaled, blocks);

  prep.scale = 1.0;
  if (prep.ops.z0.size() > 0)
    prep.scale = std::max(1.0, prep.ops.z0.cwiseAbs().maxCoeff());
  prep.ops.z0 /= prep.scale;

  const int np = static_cast<int>(prep.ops.J.cols());
  prep.col_scale = VectorXd::Ones(np);
  if (np > 0) {
    SparseMatrix<double>& J = prep.ops.J;
    J /= prep.scale;
    for (int c = 0; c < np; ++c) {
      double norm2 = 0.0;
      for (SparseMatrix<double>::InnerIterator it(J, c); it; ++it)
        norm2 += it.value() * it.value();
      const double norm = std::sqrt(norm2);
      if (norm > 0.0) {
        prep.col_scale[c] = norm;
        for (SparseMatrix<double>::InnerIterator it(J, c); it; ++it) it.valueRef() /= norm;
      }
    }
  }
  return prep;
}

Prepared prepare(const sdpcore::SdpProblem& problem) {
  const auto blocks = problem.solver_blocks();
  if (blocks.empty())
    throw std::invalid_argument(
        "prepare: dense problem has no clique decomposition; use the one-block equivalent");
  return prepare(problem.zmap, blocks);
}

namespace {

bool state_finite(const AdmmState& state) {
  if (!state.gamma.allFinite() || !state.x.allFinite()) return false;
  if (!state.g.allFinite() || !state.eta.allFinite()) return false;
  for (const auto& v : state.v)
    if (!v.allFinite()) return false;
  for (const auto& z : state.z)
    if (!z.allFinite()) return false;
  for (const auto& l : state.lambda)
    if (!l.allFinite()) return false;
  return true;
}

}  // namespace

// solve() dualizes the gamma >= 0 constraint that the companion update drops:
// a slack g with gamma = g carries a dual eta, giving
//   (1 + rho) gamma = rho g + eta - rho J^T x,
//   g = Pi_+(gamma - eta / rho),   eta += rho (g - gamma),
// while the v/z/lambda updates keep their original closed forms. The KKT solve
// keeps the (D + rho' J J^T) structure with rho' = rho / (1 + rho).
Solution solve_prepared(const Prepared& prep, const AdmmOptions& opts,
                        const VectorXd* z0_scaled, AdmmState* warm, KktCache* cache_in) {
  const auto t_start = std::chrono::steady_clock::now();
  const VecOps& ops = prep.ops;
  VectorXd z0 = z0_scaled ? *z0_scaled : ops.z0;
  if (opts.feasibility_margin > 0.0) {
    // strengthen all diagonal entries except the affine vertex, whose entry is
    // structurally pinned at zero for homogeneous specs
    for (int i = 0; i + 1 < ops.dim; ++i) {
      const int pos = ops.position_of(i, i);
      if (pos >= 0) z0[pos] += opts.feasibility_margin;
    }
  }
  const int p = static_cast<int>(ops.blocks.size());
  const int ng = static_cast<int>(ops.J.cols());

  double rho = opts.rho;
  const auto rho_eff = [](double r) { return r / (1.0 + r); };
  std::optional<KktCache> local_cache;
  if (!cache_in) local_cache.emplace(precompute(ops, rho_eff(rho)));
  KktCache& cache = cache_in ? *cache_in : *local_cache;
  if (cache.rho() >= 1.0)
    throw std::invalid_argument(
        "solve_prepared: shared cache must be built via make_solver_cache");
  // a shared cache continues at its adapted penalty
  rho = cache.rho() / (1.0 - cache.rho());

  AdmmState local_state;
  if (!warm) local_state = zero_state(ops);
  AdmmState& state = warm ? *warm : local_state;

  std::ofstream trace;
  if (!opts.trace_path.empty()) {
    trace.open(opts.trace_path);
    trace << "iter,primal_res,dual_res,lambda_max_estimate\n";
  }

  const auto unscale = [&](const VectorXd& g) {
    return VectorXd(g.cwiseQuotient(prep.col_scale));
  };
  const auto certificate = [&](Solution& sol) {
    sol.gamma = unscale(state.g);  // the cone-feasible iterate
    const MatrixXd Z = prep.zmap->evaluate(sol.gamma);
    const auto check = sdpcore::check_feasible_dense(Z, opts.final_tol);
    sol.lambda_max = check.lambda_max;
    return check.feasible;
  };

  Solution sol;
  sol.status = SolveStatus::max_iter_reached;
  double last_block_eig = std::numeric_limits<double>::quiet_NaN();
  VectorXd r(ops.vec_length());

  int t = 0;
  for (t = 1; t <= opts.max_iter; ++t) {
    // gamma, v
    r = -z0;
    for (int k = 0; k < p; ++k) {
      state.v[k] = state.z[k] + state.lambda[k] / rho;
      ops.scatter_add(k, state.v[k], r);
    }
    VectorXd gmix;
    if (ng > 0) {
      gmix = (rho * state.g + state.eta) / (1.0 + rho);
      r -= ops.J * gmix;
    }
    VectorXd w;
    state.x = cache.apply(r, w);
    if (ng > 0) {
      // gamma = (rho g + eta - rho J^T x) / (1 + rho); with the cache built at
      // rho' = rho/(1+rho), w = -rho' J^T x, so -rho J^T x / (1+rho) = w
      state.gamma = gmix + w;
    }
    for (int k = 0; k < p; ++k) state.v[k] += ops.gather(k, state.x);

    // z
    std::swap(state.z, state.z_prev);
    last_block_eig = update_z(state, ops, rho, opts.jobs);

    // slack g
    std::swap(state.g, state.g_prev);
    for (int i = 0; i < ng; ++i) {
      const double raw = state.gamma[i] - state.eta[i] / rho;
      state.g[i] = (i < static_cast<int>(prep.nneg_mask.size()) && !prep.nneg_mask[i])
                       ? raw
                       : std::max(0.0, raw);
    }

    // duals
    update_lambda(state, rho);
    state.eta += rho * (state.g - state.gamma);
    state.iter += 1;

    if (t % opts.check_every != 0 && t != opts.max_iter) continue;

    double primal = 0.0, dual = 0.0;
    for (int k = 0; k < p; ++k) {
      primal = std::max(primal, (state.z[k] - state.v[k]).cwiseAbs().maxCoeff());
      dual = std::max(dual, (state.z[k] - state.z_prev[k]).cwiseAbs().maxCoeff());
    }
    if (ng > 0) {
      primal = std::max(primal, (state.g - state.gamma).cwiseAbs().maxCoeff());
      dual = std::max(dual, (state.g - state.g_prev).cwiseAbs().maxCoeff());
    }
    dual *= rho;
    sol.primal_res = primal;
    sol.dual_res = dual;

    if (!std::isfinite(primal) || !std::isfinite(dual) || !state_finite(state)) {
      sol.status = SolveStatus::diverged;
      sol.gamma = unscale(state.g);
      break;
    }
    if (trace.is_open()) {
      char line[128];
      std::snprintf(line, sizeof line, "%d,%.6e,%.6e,%.6e\n", t, primal, dual,
                    last_block_eig * prep.scale);
      trace << line;
    }
    if (primal <= opts.eps_primal && dual <= opts.eps_dual) {
      if (certificate(sol)) {
        sol.status = SolveStatus::certified;
        break;
      }
    }
    if (opts.adapt_rho && t != opts.max_iter) {
      if (primal > 10.0 * dual && rho < 1e6)
        rho *= 2.0;
      else if (dual > 10.0 * primal && rho > 1e-6)
        rho *= 0.5;
      cache.set_rho(rho_eff(rho));
    }
  }
  sol.iters = std::min(t, opts.max_iter);

  if (sol.status == SolveStatus::max_iter_reached) {
    if (opts.final_certificate_check && state_finite(state)) {
      if (certificate(sol)) sol.status = SolveStatus::certified;
    } else {
      sol.gamma = unscale(state.g);
    }
  }
  sol.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return sol;
}

KktCache make_solver_cache(const Prepared& prep, const AdmmOptions& opts) {
  return precompute(prep.ops, opts.rho / (1.0 + opts.rho));
}

Solution solve(const sdpcore::SdpProblem& problem, const AdmmOptions& opts) {
  const Prepared prep = prepare(problem);
  return solve_prepared(prep, opts);
}

}  // namespace chordalverify::admm
