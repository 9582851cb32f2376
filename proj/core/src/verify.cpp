#include "chordalverify/verify.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <chrono>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "chordalverify/rng.hpp"

namespace chordalverify::verify {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

sdpcore::SdpProblem problem_for_mode(qcbuild::AffineMatrixMap zmap,
                                     const chordal::DimProfile& profile, int beta,
                                     sdpcore::Mode mode) {
  // dense requests run through the equivalent one-block decomposition
  if (mode == sdpcore::Mode::dense)
    return sdpcore::single_block_problem(std::move(zmap), profile, beta);
  return sdpcore::build_problem(std::move(zmap), profile, beta, mode);
}

VectorXd sample_box(Rng& rng, const VectorXd& lo, const VectorXd& hi) {
  VectorXd x(lo.size());
  for (Eigen::Index i = 0; i < lo.size(); ++i) x[i] = rng.uniform_in(lo[i], hi[i]);
  return x;
}

}  // namespace

VerifyResult verify_safety(const VerifyRequest& req) {
  const auto t0 = std::chrono::steady_clock::now();
  req.net.validate();

  nnmodel::LayerBounds bounds;
  if (req.use_adjacent) {
    if (req.input.kind != qcbuild::InputSpec::Kind::box)
      throw std::invalid_argument("verify_safety: adjacent QCs require a box input spec");
    bounds = nnmodel::interval_bounds(req.net, req.input.lo, req.input.hi);
  }
  qcbuild::ZAssembly assembly = qcbuild::assemble_Z(req.net, req.input, req.safety, req.beta,
                                                    req.use_adjacent,
                                                    req.use_adjacent ? &bounds : nullptr);
  const chordal::DimProfile profile = chordal::DimProfile::of(req.net);
  const sdpcore::SdpProblem problem =
      problem_for_mode(std::move(assembly.zmap), profile, req.beta, req.mode);

  VerifyResult out;
  out.solution = admm::solve(problem, req.opts);
  out.certified = out.solution.status == admm::SolveStatus::certified;
  out.wall_time = seconds_since(t0);
  return out;
}

std::pair<VectorXd, MatrixXd> estimate_ellipsoid(const nnmodel::Network& net,
                                                 const VectorXd& box_lo, const VectorXd& box_hi,
                                                 int n_samples, double reg, std::uint64_t seed) {
  if (n_samples < 2) throw std::invalid_argument("estimate_ellipsoid: need n_samples >= 2");
  const int m = net.output_dim();
  Rng rng(seed);
  std::vector<VectorXd> outputs;
  outputs.reserve(n_samples);
  VectorXd mean = VectorXd::Zero(m);
  for (int s = 0; s < n_samples; ++s) {
    outputs.push_back(nnmodel::eval(net, sample_box(rng, box_lo, box_hi)));
    mean += outputs.back();
  }
  mean /= n_samples;
  MatrixXd cov = MatrixXd::Zero(m, m);
  for (const auto& y : outputs) {
    const VectorXd d = y - mean;
    cov += d * d.transpose();
  }
  cov /= n_samples;
  cov.diagonal().array() += reg;

  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("estimate_ellipsoid: eigensolver failed");
  const VectorXd sqrt_vals = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  MatrixXd P = eig.eigenvectors() * sqrt_vals.asDiagonal() * eig.eigenvectors().transpose();
  return {mean, P};
}

ReachResult reach_rho(const nnmodel::Network& net, const VectorXd& box_lo,
                      const VectorXd& box_hi, const VectorXd& y_c, const MatrixXd& P_shape,
                      int beta, sdpcore::Mode mode, bool use_adjacent,
                      const BisectOptions& bisect, const admm::AdmmOptions& opts,
                      const CertSeed* seed) {
  const auto t0 = std::chrono::steady_clock::now();
  net.validate();
  const chordal::DimProfile profile = chordal::DimProfile::of(net);
  const int N = profile.N();

  nnmodel::LayerBounds bounds;
  if (use_adjacent) bounds = nnmodel::interval_bounds(net, box_lo, box_hi);
  qcbuild::ZAssembly assembly = qcbuild::assemble_Z(
      net, qcbuild::InputSpec::make_box(box_lo, box_hi),
      qcbuild::safety_ellipsoid(P_shape, y_c, 0.0, net.input_dim()), beta, use_adjacent,
      use_adjacent ? &bounds : nullptr);
  // make the rho slot structurally present, then move only that entry per probe
  const double base_slot = assembly.zmap.base.coeffRef(N, N);

  sdpcore::SdpProblem problem =
      problem_for_mode(std::move(assembly.zmap), profile, beta, mode);

  // initial upper bound: the spectral-norm product gives a radius the sector
  // relaxation can certify; sampling gives a sound lower seed
  double hi = bisect.rho_hi;
  if (hi <= 0.0) {
    Rng rng(1);
    const MatrixXd Pinv = P_shape.inverse();
    double max_r = 0.0;
    for (int s = 0; s < 1024; ++s) {
      const VectorXd y = nnmodel::eval(net, sample_box(rng, box_lo, box_hi));
      max_r = std::max(max_r, (Pinv * (y - y_c)).squaredNorm());
    }
    double lip = 1.0;
    for (const auto& W : net.weights) lip *= W.jacobiSvd().singularValues()[0];
    const VectorXd center = 0.5 * (box_lo + box_hi);
    const double spread = lip * 0.5 * (box_hi - box_lo).norm() +
                          (nnmodel::eval(net, center) - y_c).norm();
    const double sigma_min =
        Eigen::SelfAdjointEigenSolver<MatrixXd>(P_shape).eigenvalues().minCoeff();
    const double lip_radius = sigma_min > 0.0 ? std::pow(spread / sigma_min, 2) : 0.0;
    hi = std::max({1.0, 4.0 * max_r, 4.0 * lip_radius});
    hi = std::min(hi, bisect.rho_cap);
  }

  // the diagonal equilibration is calibrated at a reference radius; renew it
  // (with a cold state) whenever the probe leaves the calibrated band
  admm::Prepared prep;
  std::optional<admm::KktCache> cache;
  admm::AdmmState state;
  admm::AdmmOptions solve_opts = opts;
  int slot = -1;
  double slot_scale = 1.0, rho_equil = 0.0;
  const auto equilibrate_at = [&](double rho_ref) {
    problem.zmap.base.coeffRef(N, N) = base_slot - rho_ref;
    prep = admm::prepare(problem);
    slot = prep.ops.position_of(N, N);
    if (slot < 0) throw std::logic_error("reach_rho: (N+1, N+1) not covered by any block");
    slot_scale = prep.row_scale[N] * prep.row_scale[N];
    // first-order accuracy is relative to the original problem scale
    const double orig_scale = prep.scale / slot_scale;
    solve_opts.final_tol = std::max(opts.final_tol, 1e-9 * std::max(1.0, orig_scale));
    solve_opts.feasibility_margin =
        std::min(opts.feasibility_margin, 0.1 * solve_opts.final_tol / prep.scale);
    cache.emplace(admm::make_solver_cache(prep, solve_opts));
    state = admm::zero_state(prep.ops);
    rho_equil = rho_ref;
  };
  equilibrate_at(hi);

  ReachResult out;
  out.y_c = y_c;
  out.P_shape = P_shape;
  out.layout = assembly.layout;
  long iters = 0;

  const auto solve_at = [&](double rho) {
    if (rho > 32.0 * rho_equil || rho < rho_equil / 32.0) equilibrate_at(rho);
    problem.zmap.base.coeffRef(N, N) = base_slot - rho;
    VectorXd z0 = prep.ops.z0;
    z0[slot] = (base_slot - rho) * slot_scale / prep.scale;
    admm::Solution sol = admm::solve_prepared(prep, solve_opts, &z0, &state, &*cache);
    iters += sol.iters;
    if (sol.status == admm::SolveStatus::diverged) state = admm::zero_state(prep.ops);
    const bool ok = sol.status == admm::SolveStatus::certified;
    out.trace.emplace_back(rho, ok);
    if (ok && (!out.certified || rho <= out.rho_star)) {
      out.certified = true;
      out.rho_star = rho;
      out.gamma = sol.gamma;
    }
    return ok;
  };

  // seed certificate: re-verify the embedded gamma at its radius before trusting it
  bool hi_certified = false;
  if (seed) {
    const VectorXd embedded = qcbuild::embed_gamma(seed->gamma, seed->layout, assembly.layout);
    problem.zmap.base.coeffRef(N, N) = base_slot - seed->rho;
    const auto check =
        sdpcore::check_feasible_dense(problem.zmap.evaluate(embedded), solve_opts.final_tol);
    if (check.feasible) {
      hi = seed->rho;
      hi_certified = true;
      out.certified = true;
      out.rho_star = seed->rho;
      out.gamma = embedded;
      out.trace.emplace_back(seed->rho, true);
    }
  }

  if (!hi_certified) {
    while (true) {
      hi_certified = solve_at(hi);
      if (hi_certified) break;
      if (hi >= bisect.rho_cap) break;
      hi = std::min(hi * 2.0, bisect.rho_cap);
    }
    if (!hi_certified) {  // explicit "no certificate"
      out.certified = false;
      out.rho_star = std::numeric_limits<double>::infinity();
      out.tol_used = std::max(bisect.tol_abs, bisect.tol_rel * hi);
      out.wall_time = seconds_since(t0);
      out.total_iters = iters;
      return out;
    }
  }

  double lo = std::max(0.0, bisect.rho_lo);
  double tol = std::max(bisect.tol_abs, bisect.tol_rel * hi);
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (solve_at(mid))
      hi = mid;
    else
      lo = mid;
    tol = std::max(bisect.tol_abs, bisect.tol_rel * hi);
  }
  out.rho_star = hi;
  out.tol_used = tol;
  // the certificate at rho_star transfers to every larger radius (the slot
  // entry only relaxes the LMI), overturning budget-limited probe failures
  for (auto& [rho, ok] : out.trace)
    if (rho >= out.rho_star) ok = true;
  out.wall_time = seconds_since(t0);
  out.total_iters = iters;
  return out;
}

std::vector<ReachResult> reach_sweep(const nnmodel::Network& net, const VectorXd& box_lo,
                                     const VectorXd& box_hi, const VectorXd& y_c,
                                     const MatrixXd& P_shape, const std::vector<int>& betas,
                                     sdpcore::Mode mode, bool use_adjacent,
                                     const BisectOptions& bisect,
                                     const admm::AdmmOptions& opts) {
  std::vector<ReachResult> results;
  CertSeed seed;
  bool have_seed = false;
  for (int beta : betas) {
    ReachResult r = reach_rho(net, box_lo, box_hi, y_c, P_shape, beta, mode, use_adjacent,
                              bisect, opts, have_seed && beta >= seed.layout.beta ? &seed : nullptr);
    if (r.certified) {
      seed.rho = r.rho_star;
      seed.gamma = r.gamma;
      seed.layout = r.layout;
      have_seed = true;
    }
    results.push_back(std::move(r));
  }
  return results;
}

int soundness_check(const nnmodel::Network& net, const VectorXd& box_lo, const VectorXd& box_hi,
                    const VectorXd& y_c, const MatrixXd& P_shape, double rho, int n,
                    std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("soundness_check: need n >= 1");
  Rng rng(seed);
  const MatrixXd Pinv = P_shape.inverse();
  int violations = 0;
  for (int s = 0; s < n; ++s) {
    const VectorXd y = nnmodel::eval(net, sample_box(rng, box_lo, box_hi));
    if ((Pinv * (y - y_c)).squaredNorm() > rho) ++violations;
  }
  return violations;
}

}  // namespace chordalverify::verify
