#include <doctest.h>

#include <Eigen/Dense>

#include "chordalverify/verify.hpp"
#include "test_helpers.hpp"

using namespace chordalverify;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using testutil::Rng;

namespace {

nnmodel::Network identity_relu_net() {
  nnmodel::Network net;
  net.activation = nnmodel::Activation::relu;
  net.weights = {MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2)};
  net.biases = {VectorXd::Zero(2), VectorXd::Zero(2)};
  return net;
}

nnmodel::Network constant_net(const VectorXd& c) {
  nnmodel::Network net;
  net.activation = nnmodel::Activation::relu;
  net.weights = {MatrixXd::Zero(3, 2), MatrixXd::Zero(c.size(), 3)};
  net.biases = {VectorXd::Zero(3), c};
  return net;
}

}  // namespace

TEST_CASE("verify_safety certifies a generous L2 gain and rejects kappa = 0") {
  verify::VerifyRequest req;
  req.net = identity_relu_net();
  req.input = qcbuild::InputSpec::make_box(VectorXd::Zero(2), VectorXd::Ones(2));
  req.beta = 0;
  req.opts.max_iter = 8000;

  SUBCASE("kappa = 10 certifies in every mode") {
    for (auto mode : {sdpcore::Mode::dense, sdpcore::Mode::chordal, sdpcore::Mode::chordal2}) {
      req.mode = mode;
      req.safety = qcbuild::safety_l2gain(10.0, 2, 2);
      const auto res = verify::verify_safety(req);
      CHECK(res.certified);
      CHECK(res.solution.lambda_max <= req.opts.final_tol);
      CHECK((res.solution.gamma.array() >= 0.0).all());
    }
  }
  SUBCASE("kappa = 0 with reachable nonzero outputs never certifies") {
    req.mode = sdpcore::Mode::chordal2;
    req.safety = qcbuild::safety_l2gain(0.0, 2, 2);
    req.opts.max_iter = 600;
    const auto res = verify::verify_safety(req);
    CHECK_FALSE(res.certified);  // witness: f(1,1) = (1,1) violates ||y||^2 <= 0
  }
}

TEST_CASE("verify_safety never certifies an ellipsoid smaller than sampled outputs") {
  Rng rng(81);
  const auto net = testutil::make_net({2, 3, 2}, nnmodel::Activation::relu, rng);
  const VectorXd lo = VectorXd::Zero(2), hi = VectorXd::Ones(2);
  const auto [y_c, P] = verify::estimate_ellipsoid(net, lo, hi, 2000, 1e-3, 7);

  // rho below the max sampled radius would contradict soundness
  const MatrixXd Pinv = P.inverse();
  double max_r = 0.0;
  Rng srng(8);
  for (int s = 0; s < 2000; ++s) {
    const VectorXd y = nnmodel::eval(net, testutil::sample_box(srng, lo, hi));
    max_r = std::max(max_r, (Pinv * (y - y_c)).squaredNorm());
  }
  verify::VerifyRequest req;
  req.net = net;
  req.input = qcbuild::InputSpec::make_box(lo, hi);
  req.safety = qcbuild::safety_ellipsoid(P, y_c, 0.5 * max_r, 2);
  req.mode = sdpcore::Mode::chordal2;
  req.opts.max_iter = 800;
  const auto res = verify::verify_safety(req);
  CHECK_FALSE(res.certified);
}

TEST_CASE("estimate_ellipsoid: constant nets, determinism, and mean accuracy") {
  SUBCASE("constant network gives y_c = c and P = sqrt(reg) I") {
    const VectorXd c = (VectorXd(2) << 3.0, -1.0).finished();
    const auto net = constant_net(c);
    const auto [y_c, P] =
        verify::estimate_ellipsoid(net, VectorXd::Zero(2), VectorXd::Ones(2), 500, 1e-3, 3);
    CHECK((y_c - c).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((P - std::sqrt(1e-3) * MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("same seed gives identical results") {
    Rng rng(82);
    const auto net = testutil::make_net({2, 4, 2}, nnmodel::Activation::tanh, rng);
    const auto a =
        verify::estimate_ellipsoid(net, -VectorXd::Ones(2), VectorXd::Ones(2), 1000, 1e-3, 5);
    const auto b =
        verify::estimate_ellipsoid(net, -VectorXd::Ones(2), VectorXd::Ones(2), 1000, 1e-3, 5);
    CHECK((a.first - b.first).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.second - b.second).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("sampled mean lands within three standard errors of the box center") {
    Rng rng(83);
    const int n = 10000;
    VectorXd mean = VectorXd::Zero(2);
    for (int s = 0; s < n; ++s)
      mean += testutil::sample_box(rng, VectorXd::Zero(2), VectorXd::Ones(2));
    mean /= n;
    const double se = std::sqrt(1.0 / 12.0) / std::sqrt(static_cast<double>(n));
    CHECK((mean - VectorXd::Constant(2, 0.5)).cwiseAbs().maxCoeff() <= 3.0 * se);
  }
  CHECK_THROWS_AS(verify::estimate_ellipsoid(identity_relu_net(), VectorXd::Zero(2),
                                             VectorXd::Ones(2), 1, 1e-3, 0),
                  std::invalid_argument);
}

TEST_CASE("reach_rho: constant nets collapse to the bisection tolerance") {
  const VectorXd c = (VectorXd(2) << 1.0, 2.0).finished();
  const auto net = constant_net(c);
  const VectorXd lo = VectorXd::Zero(2), hi = VectorXd::Ones(2);
  const auto [y_c, P] = verify::estimate_ellipsoid(net, lo, hi, 200, 1e-3, 1);

  verify::BisectOptions bisect;
  bisect.tol_abs = 1e-5;
  bisect.tol_rel = 1e-3;
  admm::AdmmOptions opts;
  opts.max_iter = 2000;
  const auto res = verify::reach_rho(net, lo, hi, y_c, P, 0, sdpcore::Mode::chordal2, true,
                                     bisect, opts);
  REQUIRE(res.certified);
  CHECK(res.rho_star <= std::max(bisect.tol_abs, bisect.tol_rel * res.rho_star) + 1e-12);
  CHECK(verify::soundness_check(net, lo, hi, y_c, P, res.rho_star, 1000, 5) == 0);
}

TEST_CASE("reach_rho: certified radii dominate sampled radii and the trace is monotone") {
  Rng rng(84);
  const auto net = testutil::make_net({2, 3, 3, 2}, nnmodel::Activation::relu, rng, 0.6, true);
  const VectorXd lo = VectorXd::Constant(2, 0.5), hi = VectorXd::Constant(2, 1.5);
  const auto [y_c, P] = verify::estimate_ellipsoid(net, lo, hi, 5000, 1e-3, 11);

  verify::BisectOptions bisect;
  admm::AdmmOptions opts;
  opts.max_iter = 2500;
  opts.eps_primal = opts.eps_dual = 1e-6;
  const auto res =
      verify::reach_rho(net, lo, hi, y_c, P, 1, sdpcore::Mode::chordal2, true, bisect, opts);
  REQUIRE(res.certified);

  // sampled soundness: no sampled output may leave any certified ellipsoid
  const MatrixXd Pinv = P.inverse();
  double max_r = 0.0;
  Rng srng(12);
  for (int s = 0; s < 10000; ++s) {
    const VectorXd y = nnmodel::eval(net, testutil::sample_box(srng, lo, hi));
    max_r = std::max(max_r, (Pinv * (y - y_c)).squaredNorm());
  }
  for (const auto& [rho, ok] : res.trace)
    if (ok) CHECK(rho >= max_r - 1e-9);
  CHECK(verify::soundness_check(net, lo, hi, y_c, P, res.rho_star, 10000, 21) == 0);

  // certified probes form an upper set among the probed radii
  double largest_failed = 0.0, smallest_passed = std::numeric_limits<double>::infinity();
  for (const auto& [rho, ok] : res.trace) {
    if (!ok) largest_failed = std::max(largest_failed, rho);
    if (ok) smallest_passed = std::min(smallest_passed, rho);
  }
  CHECK(smallest_passed >= largest_failed);
  CHECK(res.rho_star == smallest_passed);
}

TEST_CASE("reach_sweep produces non-increasing radii over beta") {
  Rng rng(85);
  const auto net = testutil::make_net({2, 3, 3, 2}, nnmodel::Activation::relu, rng, 0.7, true);
  const VectorXd lo = VectorXd::Constant(2, 0.5), hi = VectorXd::Constant(2, 1.5);
  const auto [y_c, P] = verify::estimate_ellipsoid(net, lo, hi, 3000, 1e-3, 13);

  verify::BisectOptions bisect;
  admm::AdmmOptions opts;
  opts.max_iter = 2000;
  opts.eps_primal = opts.eps_dual = 1e-6;
  const auto sweep = verify::reach_sweep(net, lo, hi, y_c, P, {0, 1, 2},
                                         sdpcore::Mode::chordal2, true, bisect, opts);
  REQUIRE(sweep.size() == 3);
  for (const auto& r : sweep) CHECK(r.certified);
  CHECK(sweep[1].rho_star <= sweep[0].rho_star + 1e-6);
  CHECK(sweep[2].rho_star <= sweep[1].rho_star + 1e-6);
}

TEST_CASE("block-arrow refinement preserves feasibility outcomes (p >= 3)") {
  // on this profile the middle clique actually splits in chordal2 mode, so
  // agreement checks the zeroed off-arrow block does not change feasibility
  Rng rng(88);
  const std::vector<int> dims = {2, 2, 2, 2, 2, 2};
  chordal::DimProfile profile;
  profile.dims = {2, 2, 2, 2, 2};
  profile.m = 2;
  REQUIRE(chordal::clique_count_p(profile, 0) == 3);

  const auto net = testutil::make_net(dims, nnmodel::Activation::relu, rng, 0.8, true);
  double lip = 1.0;
  for (const auto& W : net.weights) lip *= W.jacobiSvd().singularValues()[0];

  verify::VerifyRequest req;
  req.net = net;
  req.input = qcbuild::InputSpec::make_box(VectorXd::Zero(2), VectorXd::Ones(2));
  req.beta = 0;
  req.use_adjacent = false;
  req.opts.max_iter = 15000;
  req.opts.eps_primal = req.opts.eps_dual = 1e-6;

  for (double kappa : {64.0 * lip * lip, 1e-9}) {
    req.safety = qcbuild::safety_l2gain(kappa, 2, 2);
    req.opts.max_iter = kappa > 1.0 ? 60000 : 800;
    int certified_count = 0;
    for (auto mode : {sdpcore::Mode::chordal, sdpcore::Mode::chordal2}) {
      req.mode = mode;
      const auto res = verify::verify_safety(req);
      certified_count += res.certified ? 1 : 0;
      if (res.certified) CHECK(res.solution.lambda_max <= 1e-6);
    }
    if (kappa > 1.0)
      CHECK(certified_count == 2);
    else
      CHECK(certified_count == 0);
  }
}

TEST_CASE("soundness_check counts ellipsoid violations") {
  Rng rng(86);
  const auto net = testutil::make_net({2, 3, 2}, nnmodel::Activation::relu, rng);
  const VectorXd lo = VectorXd::Zero(2), hi = VectorXd::Ones(2);
  const auto [y_c, P] = verify::estimate_ellipsoid(net, lo, hi, 500, 1e-3, 2);
  CHECK(verify::soundness_check(net, lo, hi, y_c, P, 1e12, 1000, 3) == 0);
  CHECK(verify::soundness_check(net, lo, hi, y_c, P, 0.0, 1000, 3) > 0);
}

TEST_CASE("dense, chordal and chordal2 agree on tiny nets with straddling gains") {
  Rng rng(87);
  for (int trial = 0; trial < 3; ++trial) {
    const auto net = testutil::make_net({2, 3, 2, 2}, nnmodel::Activation::relu, rng, 0.7, true);
    const VectorXd lo = VectorXd::Zero(2), hi = VectorXd::Ones(2);
    double gain = 0.0;
    Rng srng(trial);
    for (int s = 0; s < 2000; ++s) {
      const VectorXd x = testutil::sample_box(srng, lo, hi);
      if (x.squaredNorm() < 1e-6) continue;
      gain = std::max(gain, nnmodel::eval(net, x).squaredNorm() / x.squaredNorm());
    }
    double lip = 1.0;
    for (const auto& W : net.weights) lip *= W.jacobiSvd().singularValues()[0];
    verify::VerifyRequest req;
    req.net = net;
    req.input = qcbuild::InputSpec::make_box(lo, hi);
    req.beta = 1;
    req.use_adjacent = false;
    int total_certified = 0;
    for (double kappa : {64.0 * lip * lip, 0.25 * gain}) {
      req.safety = qcbuild::safety_l2gain(kappa, 2, 2);
      req.opts.max_iter = kappa > gain ? 15000 : 800;
      req.opts.eps_primal = req.opts.eps_dual = 1e-6;
      int certified_count = 0;
      for (auto mode : {sdpcore::Mode::dense, sdpcore::Mode::chordal, sdpcore::Mode::chordal2}) {
        req.mode = mode;
        const auto res = verify::verify_safety(req);
        certified_count += res.certified ? 1 : 0;
        if (res.certified) CHECK(res.solution.lambda_max <= 1e-6);
      }
      CHECK((certified_count == 0 || certified_count == 3));
      if (kappa < gain) CHECK(certified_count == 0);  // unsound otherwise
      total_certified += certified_count;
    }
    CHECK(total_certified > 0);  // the generous bound must actually certify
  }
}
