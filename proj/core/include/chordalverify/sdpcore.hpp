#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "chordalverify/chordal.hpp"
#include "chordalverify/qcbuild.hpp"

namespace chordalverify::sdpcore {

enum class Mode { dense, chordal, chordal2 };
Mode mode_from_string(const std::string& s);
const char* to_string(Mode mode);

// Assembled feasibility problem: find gamma >= 0 with Z(gamma) <= 0, posed
// dense (single LMI), chordal (closed-form cliques of F_beta), or chordal2 (block-arrow
// refined cliques).
struct SdpProblem {
  Mode mode = Mode::dense;
  qcbuild::AffineMatrixMap zmap;  // over S^{N+1}
  chordal::DimProfile profile;
  int beta = 0;
  chordal::CliqueSet cliques;  // maximal cliques of F_beta; empty in dense mode
  // chordal2: local (D_{k,1}, D_{k,2}) per clique (1-based within [|C_k|])
  std::vector<std::pair<std::vector<int>, std::vector<int>>> subcliques;

  // Vertex sets of the PSD blocks the solver works on (global, 1-based):
  // the cliques themselves in chordal mode, the refined (mapped) subsets in
  // chordal2. Empty in dense mode.
  std::vector<std::vector<int>> solver_blocks() const;
};

SdpProblem build_problem(qcbuild::AffineMatrixMap zmap, const chordal::DimProfile& profile,
                         int beta, Mode mode);

// The degenerate one-block decomposition over [1..N+1]; how dense requests
// are actually solved (equivalent to the full LMI).
SdpProblem single_block_problem(qcbuild::AffineMatrixMap zmap,
                                const chordal::DimProfile& profile, int beta);

// |C| x n 0/1 matrix with E_C X E_C^T the principal submatrix on C (1-based, sorted).
Eigen::SparseMatrix<double> clique_projector(const std::vector<int>& C, int n);

// sum_k E_{C_k}^T blocks[k] E_{C_k} over the problem's solver blocks.
Eigen::MatrixXd scatter_sum(const std::vector<Eigen::MatrixXd>& blocks,
                            const SdpProblem& problem);
Eigen::MatrixXd scatter_sum(const std::vector<Eigen::MatrixXd>& blocks,
                            const std::vector<std::vector<int>>& block_sets, int n);

struct FeasibilityCheck {
  bool feasible = false;
  double lambda_max = 0.0;
};
// Z <= 0 up to tol, via the largest eigenvalue; throws if the eigensolver fails.
FeasibilityCheck check_feasible_dense(const Eigen::MatrixXd& Z, double tol);

// Vectorized operators over the clique-covered coordinate restriction: the
// equality Z(gamma) = sum_k E^T Z_k E is enforced entrywise on the covered
// positions only (all others are identically zero on both sides).
struct VecOps {
  int dim = 0;                                // N+1
  std::vector<std::vector<int>> blocks;       // global 1-based vertex sets
  std::vector<std::pair<int, int>> positions; // covered (i, j), 0-based, column-major order
  std::unordered_map<std::int64_t, int> position_index;
  std::vector<std::vector<int>> gather_index; // per block: local column-major -> position id
  Eigen::VectorXd D;   // diagonal of sum_k H_k^T H_k = clique-coverage counts
  Eigen::SparseMatrix<double> J;  // columns vec(Z_i), restricted
  Eigen::VectorXd z0;             // vec(base), restricted

  int vec_length() const { return static_cast<int>(positions.size()); }
  int block_size(int k) const { return static_cast<int>(blocks[k].size()); }
  int position_of(int i, int j) const;  // 0-based matrix coords; -1 if uncovered
  Eigen::VectorXd gather(int k, const Eigen::VectorXd& x) const;         // H_k x
  void scatter_add(int k, const Eigen::VectorXd& xk, Eigen::VectorXd& x) const;  // += H_k^T xk
  Eigen::MatrixXd to_matrix(const Eigen::VectorXd& x) const;
  Eigen::VectorXd from_matrix(const Eigen::MatrixXd& M) const;  // throws if M has uncovered support
  Eigen::SparseMatrix<double> hk_matrix(int k) const;  // explicit H_k, |B_k|^2 x vec_length
};

// Throws on dense problems (no clique decomposition to vectorize).
VecOps vec_ops(const SdpProblem& problem);
VecOps make_vec_ops(const qcbuild::AffineMatrixMap& zmap,
                    const std::vector<std::vector<int>>& blocks);

// SDPA sparse (.dat-s) export: min sum(gamma) s.t. -Z(gamma) >= 0 (dense: one
// SDP block; chordal modes: one SDP block per solver block with the equality
// coupling written as paired LP rows) and gamma >= 0 as an LP block.
void export_sdpa(const SdpProblem& problem, const std::string& path);

struct SdpaData {
  int nvars = 0;
  std::vector<int> block_sizes;  // negative = diagonal/LP block
  std::vector<double> objective;
  struct Entry {
    int var;  // 0 = constant matrix F_0
    int block, i, j;  // 1-based
    double value;
  };
  std::vector<Entry> entries;
};
SdpaData import_sdpa(const std::string& path);
void write_sdpa(const SdpaData& data, const std::string& path);

}  // namespace chordalverify::sdpcore
