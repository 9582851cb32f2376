#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "chordalverify/admm.hpp"
#include "chordalverify/nnmodel.hpp"
#include "chordalverify/qcbuild.hpp"
#include "chordalverify/sdpcore.hpp"

namespace chordalverify::verify {

struct VerifyRequest {
  nnmodel::Network net;
  qcbuild::InputSpec input;
  qcbuild::SafetyMatrix safety;
  int beta = 0;
  sdpcore::Mode mode = sdpcore::Mode::chordal2;
  bool use_adjacent = true;
  admm::AdmmOptions opts;
};

struct VerifyResult {
  bool certified = false;  // false means "unknown", never "unsafe"
  admm::Solution solution;
  double wall_time = 0.0;
};

// Certified only with an eigenvalue-verified gamma; dense requests are solved
// through the equivalent one-block decomposition.
VerifyResult verify_safety(const VerifyRequest& req);

// Sample mean y_c and the symmetric PSD square root of (covariance + reg I).
std::pair<Eigen::VectorXd, Eigen::MatrixXd> estimate_ellipsoid(
    const nnmodel::Network& net, const Eigen::VectorXd& box_lo, const Eigen::VectorXd& box_hi,
    int n_samples, double reg, std::uint64_t seed);

struct BisectOptions {
  double rho_lo = 0.0;
  double rho_hi = 0.0;   // <= 0: seed from the spectral-norm product and sampling
  double tol_rel = 1e-2;
  double tol_abs = 1e-4;
  double rho_cap = 1e18;  // doubling limit for the initial certified upper bound
};

struct ReachResult {
  bool certified = false;  // false: rho_cap reached without any certificate
  double rho_star = std::numeric_limits<double>::infinity();
  Eigen::VectorXd y_c;
  Eigen::MatrixXd P_shape;
  Eigen::VectorXd gamma;   // certificate at rho_star
  qcbuild::ParamLayout layout;
  std::vector<std::pair<double, bool>> trace;  // (rho, certified?)
  double tol_used = 0.0;
  double wall_time = 0.0;
  long total_iters = 0;
};

// A known certificate (gamma at radius rho under the given layout) carried
// into another run, e.g. across a band-width sweep; re-verified before use.
struct CertSeed {
  double rho = 0.0;
  Eigen::VectorXd gamma;
  qcbuild::ParamLayout layout;
};

// Smallest certified rho for ||P_shape^{-1}(y - y_c)||^2 <= rho by outer
// bisection; inner solves share the KKT cache and warm-start along the rho axis
// (only the rho_slot entry of the base moves).
ReachResult reach_rho(const nnmodel::Network& net, const Eigen::VectorXd& box_lo,
                      const Eigen::VectorXd& box_hi, const Eigen::VectorXd& y_c,
                      const Eigen::MatrixXd& P_shape, int beta, sdpcore::Mode mode,
                      bool use_adjacent, const BisectOptions& bisect,
                      const admm::AdmmOptions& opts, const CertSeed* seed = nullptr);

// reach_rho over increasing beta values; each step seeds its upper bound with
// the previous certificate carried across the band embedding (re-verified), so
// rho_star is non-increasing along the sweep.
std::vector<ReachResult> reach_sweep(const nnmodel::Network& net, const Eigen::VectorXd& box_lo,
                                     const Eigen::VectorXd& box_hi, const Eigen::VectorXd& y_c,
                                     const Eigen::MatrixXd& P_shape,
                                     const std::vector<int>& betas, sdpcore::Mode mode,
                                     bool use_adjacent, const BisectOptions& bisect,
                                     const admm::AdmmOptions& opts);

// Count of sampled inputs whose output violates ||P^{-1}(y - y_c)||^2 <= rho.
int soundness_check(const nnmodel::Network& net, const Eigen::VectorXd& box_lo,
                    const Eigen::VectorXd& box_hi, const Eigen::VectorXd& y_c,
                    const Eigen::MatrixXd& P_shape, double rho, int n, std::uint64_t seed);

}  // namespace chordalverify::verify
