#include "chordalverify/chordal.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

#include "chordalverify/nnmodel.hpp"

namespace chordalverify::chordal {

int DimProfile::N() const {
  int total = 0;
  for (int d : dims) total += d;
  return total;
}

int DimProfile::S(int k) const {
  if (k < 0 || k > K()) throw std::out_of_range("S(k): k not in [0, K]");
  int total = 0;
  for (int j = 0; j < k; ++j) total += dims[j];
  return total;
}

DimProfile DimProfile::of(const nnmodel::Network& net) {
  DimProfile p;
  p.dims = net.layer_dims();
  p.m = net.output_dim();
  return p;
}

void EdgeSet::insert(int i, int j) {
  if (i < 1 || j < 1 || i > n_ || j > n_) throw std::out_of_range("edge index out of [1, n]");
  if (i == j) return;  // diagonal is implicit
  edges_.insert({std::min(i, j), std::max(i, j)});
}

bool EdgeSet::contains(int i, int j) const {
  if (i < 1 || j < 1 || i > n_ || j > n_) return false;
  if (i == j) return true;
  return edges_.count({std::min(i, j), std::max(i, j)}) > 0;
}

bool EdgeSet::is_subset_of(const EdgeSet& other) const {
  if (n_ != other.n_) return false;
  return std::includes(other.edges_.begin(), other.edges_.end(), edges_.begin(), edges_.end());
}

EdgeSet EdgeSet::united(const EdgeSet& other) const {
  if (n_ != other.n_) throw std::invalid_argument("EdgeSet union: vertex counts differ");
  EdgeSet out(n_);
  out.edges_ = edges_;
  out.edges_.insert(other.edges_.begin(), other.edges_.end());
  return out;
}

std::vector<std::vector<int>> EdgeSet::adjacency() const {
  std::vector<std::vector<int>> adj(n_);
  for (const auto& [i, j] : edges_) {
    adj[i - 1].push_back(j);
    adj[j - 1].push_back(i);
  }
  for (auto& nbrs : adj) std::sort(nbrs.begin(), nbrs.end());
  return adj;
}

static void check_beta(const DimProfile& profile, int beta) {
  const int limit = profile.N() - profile.dims[0] - 1;
  if (beta < 0 || beta > limit)
    throw std::out_of_range("beta " + std::to_string(beta) + " not in [0, " +
                            std::to_string(limit) + "]");
}

static void insert_block(EdgeSet& edges, int lo, int hi) {
  for (int i = lo; i <= hi; ++i)
    for (int j = i + 1; j <= hi; ++j) edges.insert(i, j);
}

EdgeSet pattern_family_M(const DimProfile& profile, int beta) {
  check_beta(profile, beta);
  const int N = profile.N();
  EdgeSet edges(N + 1);
  for (int k = 1; k <= profile.K() - 1; ++k)
    insert_block(edges, profile.S(k - 1) + 1, std::min(profile.S(k + 1) + beta, N));
  return edges;
}

EdgeSet pattern_family_arrow(const DimProfile& profile) {
  const int N = profile.N();
  EdgeSet edges(N + 1);
  for (int i = 1; i <= N; ++i) edges.insert(i, N + 1);
  return edges;
}

EdgeSet pattern_family_corner(const DimProfile& profile) {
  const int N = profile.N();
  EdgeSet edges(N + 1);
  for (int i = 1; i <= profile.dims[0]; ++i)
    for (int j = profile.S(profile.K() - 1) + 1; j <= N; ++j) edges.insert(i, j);
  return edges;
}

EdgeSet pattern_family_lastrows(const DimProfile& profile) {
  const int N = profile.N();
  EdgeSet edges(N + 1);
  for (int i = profile.S(profile.K() - 1) + 1; i <= N; ++i)
    for (int j = 1; j <= N + 1; ++j)
      if (j != i) edges.insert(i, j);
  return edges;
}

EdgeSet pattern_E_beta(const DimProfile& profile, int beta) {
  return pattern_family_M(profile, beta)
      .united(pattern_family_arrow(profile))
      .united(pattern_family_corner(profile));
}

EdgeSet chordal_extension(const DimProfile& profile, int beta) {
  return pattern_E_beta(profile, beta).united(pattern_family_lastrows(profile));
}

int clique_count_p(const DimProfile& profile, int beta) {
  check_beta(profile, beta);
  const int target = profile.S(profile.K() - 1);
  for (int k = 1; k + 1 <= profile.K(); ++k)
    if (profile.S(k + 1) + beta >= target) return k;
  throw std::logic_error("clique_count_p: no k satisfied S(k+1) + beta >= S(K-1)");
}

CliqueSet closed_form_cliques(const DimProfile& profile, int beta) {
  const int N = profile.N();
  const int p = clique_count_p(profile, beta);
  CliqueSet out;
  out.n = N + 1;
  for (int k = 1; k < p; ++k) {
    std::vector<int> clique;
    for (int v = profile.S(k - 1) + 1; v <= profile.S(k + 1) + beta; ++v) clique.push_back(v);
    for (int v = profile.S(profile.K() - 1) + 1; v <= N + 1; ++v) clique.push_back(v);
    out.cliques.push_back(std::move(clique));
  }
  std::vector<int> last;
  for (int v = profile.S(p - 1) + 1; v <= N + 1; ++v) last.push_back(v);
  out.cliques.push_back(std::move(last));
  return out;
}

std::pair<std::vector<int>, std::vector<int>> double_cliques(const DimProfile& profile, int beta,
                                                             int k, int p) {
  check_beta(profile, beta);
  if (k < 1 || k > p) throw std::out_of_range("double_cliques: k not in [1, p]");
  const int N = profile.N();
  const int size = k < p ? profile.dims[k - 1] + profile.dims[k] + beta + profile.dims.back() + 1
                         : N + 1 - profile.S(p - 1);
  std::vector<int> full(size);
  for (int v = 0; v < size; ++v) full[v] = v + 1;
  if (k == 1 || k == p) return {full, {}};

  const int head = profile.dims[k - 1] + profile.dims[k];  // n_k + n_{k+1}
  std::vector<int> d1, d2;
  for (int v = 1; v <= head + beta; ++v) d1.push_back(v);
  d1.push_back(size);
  for (int v = head + 1; v <= size; ++v) d2.push_back(v);
  return {d1, d2};
}

namespace {

struct BronKerbosch {
  const std::vector<std::vector<int>>& adj;  // 0-based sorted neighbor ids
  std::vector<std::vector<int>>& out;

  std::vector<int> intersect(const std::vector<int>& a, const std::vector<int>& b) const {
    std::vector<int> r;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(r));
    return r;
  }

  void expand(std::vector<int>& R, std::vector<int> P, std::vector<int> X) {
    if (P.empty() && X.empty()) {
      out.push_back(R);
      return;
    }
    // pivot maximizing |P ∩ N(u)|
    int pivot = -1, best = -1;
    for (const auto* side : {&P, &X})
      for (int u : *side) {
        const int c = static_cast<int>(intersect(P, adj[u]).size());
        if (c > best) {
          best = c;
          pivot = u;
        }
      }
    std::vector<int> candidates;
    std::set_difference(P.begin(), P.end(), adj[pivot].begin(), adj[pivot].end(),
                        std::back_inserter(candidates));
    for (int v : candidates) {
      R.push_back(v);
      expand(R, intersect(P, adj[v]), intersect(X, adj[v]));
      R.pop_back();
      P.erase(std::find(P.begin(), P.end(), v));
      X.insert(std::lower_bound(X.begin(), X.end(), v), v);
    }
  }
};

}  // namespace

CliqueSet enumerate_maximal_cliques(const EdgeSet& edges) {
  const int n = edges.num_vertices();
  if (n > 200) throw std::invalid_argument("enumerate_maximal_cliques: n > 200");
  std::vector<std::vector<int>> adj(n);
  for (const auto& [i, j] : edges.edges()) {
    adj[i - 1].push_back(j - 1);
    adj[j - 1].push_back(i - 1);
  }
  for (auto& nbrs : adj) std::sort(nbrs.begin(), nbrs.end());

  CliqueSet out;
  out.n = n;
  std::vector<int> R, P(n), X;
  for (int v = 0; v < n; ++v) P[v] = v;
  BronKerbosch bk{adj, out.cliques};
  bk.expand(R, P, X);
  for (auto& c : out.cliques) {
    for (int& v : c) ++v;
    std::sort(c.begin(), c.end());
  }
  std::sort(out.cliques.begin(), out.cliques.end());
  return out;
}

bool is_chordal(const EdgeSet& edges) {
  const int n = edges.num_vertices();
  if (n > 10000) throw std::invalid_argument("is_chordal: n > 10^4");
  if (n <= 1) return true;

  std::vector<std::vector<int>> adj(n);
  std::unordered_set<std::int64_t> edge_keys;
  edge_keys.reserve(edges.num_edges() * 2);
  for (const auto& [i, j] : edges.edges()) {
    adj[i - 1].push_back(j - 1);
    adj[j - 1].push_back(i - 1);
    edge_keys.insert(static_cast<std::int64_t>(i - 1) * n + (j - 1));
    edge_keys.insert(static_cast<std::int64_t>(j - 1) * n + (i - 1));
  }
  const auto connected = [&](int u, int v) {
    return edge_keys.count(static_cast<std::int64_t>(u) * n + v) > 0;
  };

  // maximum cardinality search; visit[t] = t-th visited vertex
  std::vector<int> weight(n, 0), visit_pos(n, -1), visit(n, -1);
  for (int t = 0; t < n; ++t) {
    int best = -1;
    for (int v = 0; v < n; ++v)
      if (visit_pos[v] < 0 && (best < 0 || weight[v] > weight[best])) best = v;
    visit_pos[best] = t;
    visit[t] = best;
    for (int u : adj[best])
      if (visit_pos[u] < 0) ++weight[u];
  }

  // reverse visit order is a perfect elimination order iff chordal
  for (int t = 0; t < n; ++t) {
    const int v = visit[t];
    // neighbors visited earlier = later in elimination order
    int parent = -1, parent_pos = -1;
    for (int u : adj[v])
      if (visit_pos[u] < t && visit_pos[u] > parent_pos) {
        parent = u;
        parent_pos = visit_pos[u];
      }
    if (parent < 0) continue;
    for (int u : adj[v])
      if (visit_pos[u] < t && u != parent && !connected(parent, u)) return false;
  }
  return true;
}

EdgeSet pattern_of_matrix(const Eigen::MatrixXd& M, double tol) {
  if (M.rows() != M.cols()) throw std::invalid_argument("pattern_of_matrix: matrix not square");
  const int n = static_cast<int>(M.rows());
  EdgeSet edges(n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (std::abs(M(i, j)) > tol || std::abs(M(j, i)) > tol) edges.insert(i + 1, j + 1);
  return edges;
}

}  // namespace chordalverify::chordal
