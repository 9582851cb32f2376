#include "chordalverify/nnmodel.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "chordalverify/rng.hpp"

namespace chordalverify::nnmodel {

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  throw std::invalid_argument("unknown activation: " + name);
}

const char* to_string(Activation act) {
  switch (act) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

double apply_activation(Activation act, double u) {
  switch (act) {
    case Activation::relu: return u > 0.0 ? u : 0.0;
    case Activation::tanh: return std::tanh(u);
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-u));
  }
  return 0.0;
}

Eigen::VectorXd apply_activation(Activation act, const Eigen::VectorXd& u) {
  Eigen::VectorXd out(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) out[i] = apply_activation(act, u[i]);
  return out;
}

int Network::stacked_dim() const {
  int N = input_dim();
  for (int k = 0; k + 1 < num_layers(); ++k) N += static_cast<int>(weights[k].rows());
  return N;
}

std::vector<int> Network::layer_dims() const {
  std::vector<int> d;
  d.push_back(input_dim());
  for (int k = 0; k + 1 < num_layers(); ++k) d.push_back(static_cast<int>(weights[k].rows()));
  return d;
}

std::vector<int> Network::dims() const {
  std::vector<int> d = layer_dims();
  d.push_back(output_dim());
  return d;
}

void Network::validate() const {
  const int K = num_layers();
  if (K < 2) throw std::invalid_argument("network needs K >= 2 layers, got " + std::to_string(K));
  if (biases.size() != weights.size())
    throw std::invalid_argument("bias count does not match weight count");
  for (int k = 0; k < K; ++k) {
    if (weights[k].rows() < 1 || weights[k].cols() < 1)
      throw std::invalid_argument("layer " + std::to_string(k + 1) + ": empty weight matrix");
    if (biases[k].size() != weights[k].rows())
      throw std::invalid_argument("layer " + std::to_string(k + 1) + ": bias length " +
                                  std::to_string(biases[k].size()) + " != rows " +
                                  std::to_string(weights[k].rows()));
    if (k > 0 && weights[k].cols() != weights[k - 1].rows())
      throw std::invalid_argument("layer " + std::to_string(k + 1) + ": weight matrix has " +
                                  std::to_string(weights[k].cols()) + " columns, expected " +
                                  std::to_string(weights[k - 1].rows()));
  }
}

StackedSystem stacked_system(const Network& net) {
  net.validate();
  const std::vector<int> dims = net.layer_dims();
  const int K = net.num_layers();
  const int N = net.stacked_dim();
  const int rows = N - dims[0];

  StackedSystem sys;
  sys.N = N;
  sys.A = Eigen::MatrixXd::Zero(rows, N);
  sys.B = Eigen::MatrixXd::Zero(rows, N);
  sys.b = Eigen::VectorXd::Zero(rows);

  int row = 0, col = 0;
  for (int k = 0; k < K - 1; ++k) {
    const int nk = dims[k], nk1 = dims[k + 1];
    sys.A.block(row, col, nk1, nk) = net.weights[k];
    sys.B.block(row, col + nk, nk1, nk1).setIdentity();
    sys.b.segment(row, nk1) = net.biases[k];
    row += nk1;
    col += nk;
  }
  return sys;
}

Eigen::SparseMatrix<double> selector(int k, const std::vector<int>& layer_dims) {
  const int K = static_cast<int>(layer_dims.size());
  if (k < 1 || k > K)
    throw std::out_of_range("selector index " + std::to_string(k) + " not in [1, " +
                            std::to_string(K) + "]");
  int N = 0;
  for (int d : layer_dims) N += d;
  int offset = 0;
  for (int j = 0; j < k - 1; ++j) offset += layer_dims[j];

  Eigen::SparseMatrix<double> E(layer_dims[k - 1], N + 1);
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < layer_dims[k - 1]; ++i) t.emplace_back(i, offset + i, 1.0);
  E.setFromTriplets(t.begin(), t.end());
  return E;
}

Eigen::SparseMatrix<double> selector_affine(const std::vector<int>& layer_dims) {
  int N = 0;
  for (int d : layer_dims) N += d;
  Eigen::SparseMatrix<double> E(1, N + 1);
  E.insert(0, N) = 1.0;
  E.makeCompressed();
  return E;
}

LayerBounds interval_bounds(const Network& net, const Eigen::VectorXd& input_lo,
                            const Eigen::VectorXd& input_hi) {
  net.validate();
  if (input_lo.size() != net.input_dim() || input_hi.size() != net.input_dim())
    throw std::invalid_argument("input bound length does not match input dimension");
  if ((input_lo.array() > input_hi.array()).any())
    throw std::invalid_argument("input_lo exceeds input_hi");

  LayerBounds out;
  Eigen::VectorXd lo = input_lo, hi = input_hi;
  for (int k = 0; k + 1 < net.num_layers(); ++k) {
    const Eigen::MatrixXd& W = net.weights[k];
    const Eigen::MatrixXd Wp = W.cwiseMax(0.0), Wn = W.cwiseMin(0.0);
    Eigen::VectorXd pre_lo = Wp * lo + Wn * hi + net.biases[k];
    Eigen::VectorXd pre_hi = Wp * hi + Wn * lo + net.biases[k];
    out.pre_lo.push_back(pre_lo);
    out.pre_hi.push_back(pre_hi);
    // relu/tanh/sigmoid are monotone
    lo = apply_activation(net.activation, pre_lo);
    hi = apply_activation(net.activation, pre_hi);
    out.post_lo.push_back(lo);
    out.post_hi.push_back(hi);
  }
  return out;
}

Eigen::VectorXd eval(const Network& net, const Eigen::VectorXd& x) {
  if (x.size() != net.input_dim())
    throw std::invalid_argument("input length does not match network input dimension");
  Eigen::VectorXd v = x;
  for (int k = 0; k + 1 < net.num_layers(); ++k)
    v = apply_activation(net.activation, net.weights[k] * v + net.biases[k]);
  return net.weights.back() * v + net.biases.back();
}

Eigen::VectorXd stacked_trajectory(const Network& net, const Eigen::VectorXd& x) {
  if (x.size() != net.input_dim())
    throw std::invalid_argument("input length does not match network input dimension");
  Eigen::VectorXd out(net.stacked_dim());
  int offset = 0;
  Eigen::VectorXd v = x;
  out.segment(offset, v.size()) = v;
  offset += static_cast<int>(v.size());
  for (int k = 0; k + 1 < net.num_layers(); ++k) {
    v = apply_activation(net.activation, net.weights[k] * v + net.biases[k]);
    out.segment(offset, v.size()) = v;
    offset += static_cast<int>(v.size());
  }
  return out;
}

Network random_network(int width, int depth, int in_dim, int out_dim, SigmaMode mode,
                       std::uint64_t seed) {
  if (width < 1 || depth < 1 || in_dim < 1 || out_dim < 1)
    throw std::invalid_argument("random_network: dimensions must be >= 1");
  const double sigma = mode == SigmaMode::scalability
                           ? 2.0 / std::sqrt(width * std::log(static_cast<double>(width)))
                           : 1.0 / std::sqrt(2.0);
  Rng rng(seed);
  Network net;
  net.activation = Activation::relu;
  std::vector<int> dims;
  dims.push_back(in_dim);
  for (int k = 0; k < depth; ++k) dims.push_back(width);
  dims.push_back(out_dim);
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    Eigen::MatrixXd W(dims[k + 1], dims[k]);
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = sigma * rng.normal();
    net.weights.push_back(std::move(W));
    net.biases.push_back(Eigen::VectorXd::Zero(dims[k + 1]));
  }
  net.validate();
  return net;
}

std::string network_to_json(const Network& net) {
  net.validate();
  nlohmann::json j;
  j["dims"] = net.dims();
  j["activation"] = to_string(net.activation);
  nlohmann::json weights = nlohmann::json::array();
  for (const auto& W : net.weights) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < W.cols(); ++c) row.push_back(W(i, c));
      rows.push_back(std::move(row));
    }
    weights.push_back(std::move(rows));
  }
  j["weights"] = std::move(weights);
  nlohmann::json biases = nlohmann::json::array();
  for (const auto& b : net.biases) {
    nlohmann::json vec = nlohmann::json::array();
    for (Eigen::Index i = 0; i < b.size(); ++i) vec.push_back(b[i]);
    biases.push_back(std::move(vec));
  }
  j["biases"] = std::move(biases);
  return j.dump(2) + "\n";
}

void save_network(const Network& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << network_to_json(net);
  if (!out) throw std::runtime_error("write failed: " + path);
}

Network load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open network file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("parse error in " + path + ": " + e.what());
  }

  Network net;
  try {
    net.activation = activation_from_string(j.at("activation").get<std::string>());
    const auto dims = j.at("dims").get<std::vector<int>>();
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    if (dims.size() < 3) throw std::runtime_error("dims must list n_1..n_K, m (K >= 2)");
    if (weights.size() + 1 != dims.size() || biases.size() != weights.size())
      throw std::runtime_error("dims/weights/biases lengths are inconsistent");
    for (std::size_t k = 0; k < weights.size(); ++k) {
      const auto& rows = weights[k];
      const int expect_rows = dims[k + 1], expect_cols = dims[k];
      if (static_cast<int>(rows.size()) != expect_rows)
        throw std::runtime_error("layer " + std::to_string(k + 1) + ": expected " +
                                 std::to_string(expect_rows) + " rows, got " +
                                 std::to_string(rows.size()));
      Eigen::MatrixXd W(expect_rows, expect_cols);
      for (int i = 0; i < expect_rows; ++i) {
        if (static_cast<int>(rows[i].size()) != expect_cols)
          throw std::runtime_error("layer " + std::to_string(k + 1) + ": row " +
                                   std::to_string(i) + " has " + std::to_string(rows[i].size()) +
                                   " columns, expected " + std::to_string(expect_cols));
        for (int c = 0; c < expect_cols; ++c) W(i, c) = rows[i][c].get<double>();
      }
      net.weights.push_back(std::move(W));
      const auto bvec = biases[k].get<std::vector<double>>();
      if (static_cast<int>(bvec.size()) != expect_rows)
        throw std::runtime_error("layer " + std::to_string(k + 1) + ": bias length " +
                                 std::to_string(bvec.size()) + " != " +
                                 std::to_string(expect_rows));
      net.biases.push_back(Eigen::Map<const Eigen::VectorXd>(bvec.data(), bvec.size()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("schema error in " + path + ": " + e.what());
  }
  net.validate();
  return net;
}

}  // namespace chordalverify::nnmodel
