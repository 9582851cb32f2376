#include <doctest.h>

#include <Eigen/Dense>
#include <cstdio>
#include <fstream>

#include "chordalverify/nnmodel.hpp"
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

std::string tmp_path(const std::string& name) { return std::string(TEST_TMPDIR) + "/" + name; }

}  // namespace

TEST_CASE("identity 1-hidden-layer net round-trips through JSON") {
  const nnmodel::Network net = identity_relu_net();
  CHECK(net.num_layers() == 2);
  CHECK(net.dims() == std::vector<int>{2, 2, 2});

  const std::string path = tmp_path("id.json");
  nnmodel::save_network(net, path);
  const nnmodel::Network loaded = nnmodel::load_network(path);
  CHECK(loaded.num_layers() == 2);
  CHECK(loaded.activation == nnmodel::Activation::relu);
  CHECK(loaded.output_dim() == 2);
  CHECK((loaded.weights[0] - net.weights[0]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("load rejects a weight matrix with the wrong column count") {
  const std::string path = tmp_path("bad_shape.json");
  std::ofstream out(path);
  out << R"({"dims": [2, 2, 2], "activation": "relu",
             "weights": [[[1, 0], [0, 1]], [[1, 0, 9], [0, 1, 9]]],
             "biases": [[0, 0], [0, 0]]})";
  out.close();
  CHECK_THROWS_WITH_AS(nnmodel::load_network(path), doctest::Contains("layer 2"),
                       std::runtime_error);
}

TEST_CASE("load rejects malformed JSON with a parse error") {
  const std::string path = tmp_path("bad_parse.json");
  std::ofstream out(path);
  out << "{ not json";
  out.close();
  CHECK_THROWS_WITH_AS(nnmodel::load_network(path), doctest::Contains("parse error"),
                       std::runtime_error);
}

TEST_CASE("random networks round-trip losslessly and are seed-deterministic") {
  const auto net = nnmodel::random_network(4, 3, 2, 2, nnmodel::SigmaMode::scalability, 42);
  const std::string path = tmp_path("rand.json");
  nnmodel::save_network(net, path);
  const auto loaded = nnmodel::load_network(path);
  REQUIRE(loaded.num_layers() == net.num_layers());
  for (int k = 0; k < net.num_layers(); ++k) {
    CHECK((loaded.weights[k] - net.weights[k]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((loaded.biases[k] - net.biases[k]).cwiseAbs().maxCoeff() == 0.0);
  }

  const auto again = nnmodel::random_network(4, 3, 2, 2, nnmodel::SigmaMode::scalability, 42);
  for (int k = 0; k < net.num_layers(); ++k)
    CHECK((again.weights[k] - net.weights[k]).cwiseAbs().maxCoeff() == 0.0);
  CHECK(nnmodel::network_to_json(again) == nnmodel::network_to_json(net));
}

TEST_CASE("random network weight spread matches the target sigma") {
  // aggregate entries over many seeds so the sample has >= 10^4 values
  const auto sample_std = [](nnmodel::SigmaMode mode, int width) {
    double sum = 0.0, sumsq = 0.0;
    long count = 0;
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      const auto net = nnmodel::random_network(width, 5, 2, 2, mode, seed);
      for (const auto& W : net.weights) {
        sum += W.sum();
        sumsq += W.array().square().sum();
        count += W.size();
      }
    }
    REQUIRE(count >= 10000);
    const double mean = sum / count;
    return std::sqrt(sumsq / count - mean * mean);
  };

  const double sigma_scal = 2.0 / std::sqrt(10.0 * std::log(10.0));  // ~0.4168
  CHECK(sample_std(nnmodel::SigmaMode::scalability, 10) ==
        doctest::Approx(sigma_scal).epsilon(0.05));
  const double sigma_reach = 1.0 / std::sqrt(2.0);  // ~0.7071
  CHECK(sample_std(nnmodel::SigmaMode::reachability, 20) ==
        doctest::Approx(sigma_reach).epsilon(0.05));

  const auto w20 = nnmodel::random_network(20, 10, 2, 2, nnmodel::SigmaMode::reachability, 1);
  CHECK(w20.dims() == std::vector<int>{2, 20, 20, 20, 20, 20, 20, 20, 20, 20, 20, 2});
}

TEST_CASE("stacked system has the block-diagonal layout") {
  SUBCASE("K = 2: A = [W_1 | 0], B = [0 | I], b = b_1") {
    Rng rng(5);
    const auto net = testutil::make_net({2, 3, 2}, nnmodel::Activation::relu, rng);
    const auto sys = nnmodel::stacked_system(net);
    CHECK(sys.A.rows() == 3);
    CHECK(sys.A.cols() == 5);
    CHECK((sys.A.leftCols(2) - net.weights[0]).cwiseAbs().maxCoeff() == 0.0);
    CHECK(sys.A.rightCols(3).cwiseAbs().maxCoeff() == 0.0);
    CHECK(sys.B.leftCols(2).cwiseAbs().maxCoeff() == 0.0);
    CHECK((sys.B.rightCols(3) - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((sys.b - net.biases[0]).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("K = 6 with n_k = 3 gives 15 x 18 blocks") {
    Rng rng(6);
    const auto net = testutil::make_net({3, 3, 3, 3, 3, 3, 2}, nnmodel::Activation::relu, rng);
    const auto sys = nnmodel::stacked_system(net);
    CHECK(sys.A.rows() == 15);
    CHECK(sys.A.cols() == 18);
    CHECK(sys.B.rows() == 15);
    CHECK(sys.B.cols() == 18);
  }
}

TEST_CASE("stacked system satisfies B x = phi(A x + b) on forward passes") {
  Rng rng(7);
  for (auto act :
       {nnmodel::Activation::relu, nnmodel::Activation::tanh, nnmodel::Activation::sigmoid}) {
    const auto net = testutil::make_net({2, 4, 3, 2}, act, rng);
    const auto sys = nnmodel::stacked_system(net);
    for (int trial = 0; trial < 20; ++trial) {
      const VectorXd x1 = testutil::random_vector(rng, 2, 2.0);
      const VectorXd x = nnmodel::stacked_trajectory(net, x1);
      const VectorXd lhs = sys.B * x;
      const VectorXd rhs = nnmodel::apply_activation(act, sys.A * x + sys.b);
      CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("selectors pick layers out of the stacked vector") {
  const std::vector<int> dims = {2, 3};  // N = 5
  const auto E1 = Eigen::MatrixXd(nnmodel::selector(1, dims));
  CHECK(E1.rows() == 2);
  CHECK(E1.cols() == 6);
  CHECK(E1(0, 0) == 1.0);
  CHECK(E1(1, 1) == 1.0);
  CHECK(E1.sum() == 2.0);

  const auto Ea = Eigen::MatrixXd(nnmodel::selector_affine(dims));
  CHECK(Ea.rows() == 1);
  CHECK(Ea(0, 5) == 1.0);
  CHECK(Ea.sum() == 1.0);

  // k = K selects positions S(K-1)+1..N
  const std::vector<int> dims3 = {2, 4, 3};  // N = 9
  const auto EK = Eigen::MatrixXd(nnmodel::selector(3, dims3));
  CHECK(EK.rows() == 3);
  for (int i = 0; i < 3; ++i) CHECK(EK(i, 6 + i) == 1.0);

  CHECK_THROWS_AS(nnmodel::selector(4, dims3), std::out_of_range);
  CHECK_THROWS_AS(nnmodel::selector(0, dims3), std::out_of_range);
}

TEST_CASE("selector algebra: sum of E_k^T E_k plus E_a^T E_a is the identity") {
  const std::vector<int> dims = {2, 4, 3, 2};
  const int N = 11;
  MatrixXd acc = MatrixXd::Zero(N + 1, N + 1);
  for (int k = 1; k <= 4; ++k) {
    const MatrixXd Ek = MatrixXd(nnmodel::selector(k, dims));
    acc += Ek.transpose() * Ek;
  }
  const MatrixXd Ea = MatrixXd(nnmodel::selector_affine(dims));
  acc += Ea.transpose() * Ea;
  CHECK((acc - MatrixXd::Identity(N + 1, N + 1)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("interval bounds: worked 1-d example and degenerate nets") {
  SUBCASE("W = [[1, -1]] over [0,1]^2 gives pre [-1,1], relu post [0,1]") {
    nnmodel::Network net;
    net.activation = nnmodel::Activation::relu;
    net.weights = {(MatrixXd(1, 2) << 1.0, -1.0).finished(), MatrixXd::Identity(1, 1)};
    net.biases = {VectorXd::Zero(1), VectorXd::Zero(1)};
    const auto b = nnmodel::interval_bounds(net, VectorXd::Zero(2), VectorXd::Ones(2));
    CHECK(b.pre_lo[0][0] == doctest::Approx(-1.0));
    CHECK(b.pre_hi[0][0] == doctest::Approx(1.0));
    CHECK(b.post_lo[0][0] == doctest::Approx(0.0));
    CHECK(b.post_hi[0][0] == doctest::Approx(1.0));
  }
  SUBCASE("zero weights collapse to the bias point") {
    nnmodel::Network net;
    net.activation = nnmodel::Activation::tanh;
    net.weights = {MatrixXd::Zero(3, 2), MatrixXd::Zero(2, 3)};
    net.biases = {VectorXd::Constant(3, 0.5), VectorXd::Zero(2)};
    const auto b = nnmodel::interval_bounds(net, -VectorXd::Ones(2), VectorXd::Ones(2));
    CHECK((b.pre_lo[0] - b.pre_hi[0]).cwiseAbs().maxCoeff() == 0.0);
    CHECK(b.post_lo[0][0] == doctest::Approx(std::tanh(0.5)));
  }
}

TEST_CASE("interval bounds are never violated by sampled trajectories") {
  Rng rng(9);
  const auto net = testutil::make_net({3, 5, 4, 2}, nnmodel::Activation::relu, rng);
  const VectorXd lo = VectorXd::Constant(3, -0.5), hi = VectorXd::Constant(3, 1.5);
  const auto bounds = nnmodel::interval_bounds(net, lo, hi);
  int violations = 0;
  for (int s = 0; s < 10000; ++s) {
    VectorXd v = testutil::sample_box(rng, lo, hi);
    for (int k = 0; k + 1 < net.num_layers(); ++k) {
      const VectorXd pre = net.weights[k] * v + net.biases[k];
      if (!(pre.array() >= bounds.pre_lo[k].array() - 1e-12).all()) ++violations;
      if (!(pre.array() <= bounds.pre_hi[k].array() + 1e-12).all()) ++violations;
      v = nnmodel::apply_activation(net.activation, pre);
      if (!(v.array() >= bounds.post_lo[k].array() - 1e-12).all()) ++violations;
      if (!(v.array() <= bounds.post_hi[k].array() + 1e-12).all()) ++violations;
    }
  }
  CHECK(violations == 0);
}

TEST_CASE("eval computes the recursive forward pass") {
  SUBCASE("identity relu net maps (1, -1) to (1, 0)") {
    const auto net = identity_relu_net();
    const VectorXd y = nnmodel::eval(net, (VectorXd(2) << 1.0, -1.0).finished());
    CHECK(y[0] == doctest::Approx(1.0));
    CHECK(y[1] == doctest::Approx(0.0));
  }
  SUBCASE("zero-weight net returns b_K for any input") {
    nnmodel::Network net;
    net.activation = nnmodel::Activation::sigmoid;
    net.weights = {MatrixXd::Zero(3, 2), MatrixXd::Zero(2, 3)};
    net.biases = {VectorXd::Ones(3), (VectorXd(2) << 7.0, -3.0).finished()};
    Rng rng(10);
    for (int i = 0; i < 5; ++i) {
      const VectorXd y = nnmodel::eval(net, testutil::random_vector(rng, 2, 10.0));
      CHECK(y[0] == doctest::Approx(7.0));
      CHECK(y[1] == doctest::Approx(-3.0));
    }
  }
  SUBCASE("agrees with the stacked-trajectory reconstruction") {
    Rng rng(11);
    const auto net = testutil::make_net({2, 4, 3, 2}, nnmodel::Activation::tanh, rng);
    for (int i = 0; i < 10; ++i) {
      const VectorXd x = testutil::random_vector(rng, 2);
      const VectorXd traj = nnmodel::stacked_trajectory(net, x);
      const VectorXd xK = traj.tail(3);
      const VectorXd y = net.weights.back() * xK + net.biases.back();
      CHECK((y - nnmodel::eval(net, x)).cwiseAbs().maxCoeff() <= 1e-13);
    }
  }
}

TEST_CASE("network validation names the offending layer") {
  nnmodel::Network net;
  net.activation = nnmodel::Activation::relu;
  net.weights = {MatrixXd::Zero(3, 2), MatrixXd::Zero(2, 4)};  // 4 != 3
  net.biases = {VectorXd::Zero(3), VectorXd::Zero(2)};
  CHECK_THROWS_WITH_AS(net.validate(), doctest::Contains("layer 2"), std::invalid_argument);

  nnmodel::Network single;
  single.weights = {MatrixXd::Zero(2, 2)};
  single.biases = {VectorXd::Zero(2)};
  CHECK_THROWS_AS(single.validate(), std::invalid_argument);
}
