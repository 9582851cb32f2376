#pragma once

#include <Eigen/Dense>
#include <set>
#include <utility>
#include <vector>

namespace chordalverify::nnmodel {
struct Network;
}

namespace chordalverify::chordal {

// Layer-size bookkeeping with prefix sums S(k) = n_1 + ... + n_k, S(0) = 0.
struct DimProfile {
  std::vector<int> dims;  // n_1..n_K
  int m = 0;

  int K() const { return static_cast<int>(dims.size()); }
  int N() const;
  int S(int k) const;
  static DimProfile of(const nnmodel::Network& net);
};

// Symmetric sparsity pattern over vertices 1..n (1-based, matching the index
// sets E_beta, F_beta etc.). Diagonal entries count as dense; only
// off-diagonal pairs are stored.
class EdgeSet {
 public:
  explicit EdgeSet(int n) : n_(n) {}
  int num_vertices() const { return n_; }
  void insert(int i, int j);
  bool contains(int i, int j) const;
  std::size_t num_edges() const { return edges_.size(); }
  const std::set<std::pair<int, int>>& edges() const { return edges_; }  // i < j
  bool is_subset_of(const EdgeSet& other) const;
  EdgeSet united(const EdgeSet& other) const;
  // adjacency()[v-1] = sorted 1-based neighbors of vertex v
  std::vector<std::vector<int>> adjacency() const;
  bool operator==(const EdgeSet& other) const {
    return n_ == other.n_ && edges_ == other.edges_;
  }

 private:
  int n_;
  std::set<std::pair<int, int>> edges_;
};

struct CliqueSet {
  int n = 0;
  std::vector<std::vector<int>> cliques;  // each sorted, 1-based
};

// E_beta = E_M u E_a u E_{1,K} over [N+1]; block upper limits clipped to N.
EdgeSet pattern_E_beta(const DimProfile& profile, int beta);
EdgeSet pattern_family_M(const DimProfile& profile, int beta);
EdgeSet pattern_family_arrow(const DimProfile& profile);     // E_a
EdgeSet pattern_family_corner(const DimProfile& profile);    // E_{1,K}
EdgeSet pattern_family_lastrows(const DimProfile& profile);  // E_K

// F_beta = E_beta u E_K; chordal by construction.
EdgeSet chordal_extension(const DimProfile& profile, int beta);

// p = min{k : S(k+1) + beta >= S(K-1)}
int clique_count_p(const DimProfile& profile, int beta);

// Closed-form maximal cliques of F_beta: C_k for k < p unions the band block
// with the last-layer rows, C_p is the trailing interval.
CliqueSet closed_form_cliques(const DimProfile& profile, int beta);

// Block-arrow split of clique k: local 1-based subsets (D_{k,1}, D_{k,2}) of
// [|C_k|]; k = 1 and k = p return (full, empty).
std::pair<std::vector<int>, std::vector<int>> double_cliques(const DimProfile& profile,
                                                             int beta, int k, int p);

// Bron-Kerbosch with pivoting; validation oracle, guarded to n <= 200.
CliqueSet enumerate_maximal_cliques(const EdgeSet& edges);

// Maximum-cardinality search + perfect-elimination-ordering check; n <= 10^4.
bool is_chordal(const EdgeSet& edges);

// Edges where |M_ij| > tol (M symmetric); 1-based output.
EdgeSet pattern_of_matrix(const Eigen::MatrixXd& M, double tol);

}  // namespace chordalverify::chordal
