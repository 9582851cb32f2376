#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <string>
#include <vector>

namespace chordalverify::nnmodel {

enum class Activation { relu, tanh, sigmoid };

Activation activation_from_string(const std::string& name);
const char* to_string(Activation act);
double apply_activation(Activation act, double u);
Eigen::VectorXd apply_activation(Activation act, const Eigen::VectorXd& u);

// Feedforward network f(x) = W_K x_K + b_K, x_{k+1} = phi(W_k x_k + b_k).
// weights[k-1] is W_k (rows n_{k+1}, cols n_k; last layer m x n_K),
// biases[k-1] is b_k. Immutable by convention after construction.
struct Network {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  Activation activation = Activation::relu;

  int num_layers() const { return static_cast<int>(weights.size()); }  // K
  int input_dim() const { return static_cast<int>(weights.front().cols()); }
  int output_dim() const { return static_cast<int>(weights.back().rows()); }
  int stacked_dim() const;              // N = n_1 + ... + n_K
  std::vector<int> layer_dims() const;  // n_1..n_K
  std::vector<int> dims() const;        // n_1..n_K, m (as stored in the JSON file)
  void validate() const;                // throws naming the offending layer
};

// Block system with B x = phi(A x + b) for the stacked layer vector x.
struct StackedSystem {
  Eigen::MatrixXd A;   // (N - n_1) x N, block diagonal of W_1..W_{K-1}, zero last block column
  Eigen::MatrixXd B;   // (N - n_1) x N, shifted identity selecting x_2..x_K
  Eigen::VectorXd b;   // vcat(b_1..b_{K-1})
  int N = 0;
};
StackedSystem stacked_system(const Network& net);

// Selector E_k z = x_k as an n_k x (N+1) 0/1 matrix; k is 1-based in [1, K].
Eigen::SparseMatrix<double> selector(int k, const std::vector<int>& layer_dims);
// E_a z = 1, shape 1 x (N+1).
Eigen::SparseMatrix<double> selector_affine(const std::vector<int>& layer_dims);

struct LayerBounds {
  // index k-1 holds layer k, k = 1..K-1
  std::vector<Eigen::VectorXd> pre_lo, pre_hi;    // bounds on W_k x_k + b_k
  std::vector<Eigen::VectorXd> post_lo, post_hi;  // bounds on x_{k+1}
};
// Plain interval-arithmetic propagation (W split into positive/negative parts).
LayerBounds interval_bounds(const Network& net, const Eigen::VectorXd& input_lo,
                            const Eigen::VectorXd& input_hi);

Eigen::VectorXd eval(const Network& net, const Eigen::VectorXd& x);
// vcat(x_1, ..., x_K) for a forward pass from x.
Eigen::VectorXd stacked_trajectory(const Network& net, const Eigen::VectorXd& x);

enum class SigmaMode { scalability, reachability };

// Gaussian weights with sigma = 2/sqrt(w ln w) (scalability) or 1/sqrt(2)
// (reachability), zero biases, relu; deterministic for a given seed.
Network random_network(int width, int depth, int in_dim, int out_dim, SigmaMode mode,
                       std::uint64_t seed);

Network load_network(const std::string& path);
void save_network(const Network& net, const std::string& path);
std::string network_to_json(const Network& net);

}  // namespace chordalverify::nnmodel
