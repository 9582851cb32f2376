#include "chordalverify/sdpcore.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace chordalverify::sdpcore {

using Eigen::MatrixXd;
using Eigen::SparseMatrix;
using Eigen::VectorXd;

Mode mode_from_string(const std::string& s) {
  if (s == "dense") return Mode::dense;
  if (s == "chordal") return Mode::chordal;
  if (s == "chordal2") return Mode::chordal2;
  throw std::invalid_argument("unknown mode: " + s);
}

const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::dense: return "dense";
    case Mode::chordal: return "chordal";
    case Mode::chordal2: return "chordal2";
  }
  return "?";
}

std::vector<std::vector<int>> SdpProblem::solver_blocks() const {
  if (mode == Mode::dense && cliques.cliques.empty()) return {};
  if (mode != Mode::chordal2) return cliques.cliques;
  std::vector<std::vector<int>> blocks;
  for (std::size_t k = 0; k < cliques.cliques.size(); ++k) {
    const std::vector<int>& C = cliques.cliques[k];
    const auto& [d1, d2] = subcliques[k];
    std::vector<int> b1, b2;
    for (int v : d1) b1.push_back(C[v - 1]);
    for (int v : d2) b2.push_back(C[v - 1]);
    blocks.push_back(std::move(b1));
    if (!b2.empty()) blocks.push_back(std::move(b2));
  }
  return blocks;
}

SdpProblem build_problem(qcbuild::AffineMatrixMap zmap, const chordal::DimProfile& profile,
                         int beta, Mode mode) {
  if (zmap.dim != profile.N() + 1)
    throw std::invalid_argument("build_problem: zmap dimension != N + 1");
  SdpProblem problem;
  problem.mode = mode;
  problem.zmap = std::move(zmap);
  problem.profile = profile;
  problem.beta = beta;
  problem.cliques.n = profile.N() + 1;
  if (mode == Mode::dense) {
    // validates beta even though no cliques are built
    chordal::clique_count_p(profile, beta);
    return problem;
  }
  problem.cliques = chordal::closed_form_cliques(profile, beta);
  if (mode == Mode::chordal2) {
    const int p = static_cast<int>(problem.cliques.cliques.size());
    for (int k = 1; k <= p; ++k)
      problem.subcliques.push_back(chordal::double_cliques(profile, beta, k, p));
  }
  return problem;
}

SdpProblem single_block_problem(qcbuild::AffineMatrixMap zmap, const chordal::DimProfile& profile,
                                int beta) {
  SdpProblem problem = build_problem(std::move(zmap), profile, beta, Mode::dense);
  problem.mode = Mode::chordal;
  std::vector<int> full(profile.N() + 1);
  for (int v = 0; v <= profile.N(); ++v) full[v] = v + 1;
  problem.cliques.cliques.push_back(std::move(full));
  return problem;
}

Eigen::SparseMatrix<double> clique_projector(const std::vector<int>& C, int n) {
  SparseMatrix<double> E(static_cast<int>(C.size()), n);
  std::vector<Eigen::Triplet<double>> t;
  int prev = 0;
  for (std::size_t r = 0; r < C.size(); ++r) {
    if (C[r] <= prev) throw std::invalid_argument("clique_projector: vertices must be sorted");
    if (C[r] > n) throw std::out_of_range("clique_projector: vertex out of range");
    t.emplace_back(static_cast<int>(r), C[r] - 1, 1.0);
    prev = C[r];
  }
  E.setFromTriplets(t.begin(), t.end());
  return E;
}

Eigen::MatrixXd scatter_sum(const std::vector<Eigen::MatrixXd>& blocks,
                            const std::vector<std::vector<int>>& block_sets, int n) {
  if (blocks.size() != block_sets.size())
    throw std::invalid_argument("scatter_sum: block count mismatch");
  MatrixXd X = MatrixXd::Zero(n, n);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const auto& C = block_sets[k];
    const auto& Zk = blocks[k];
    if (Zk.rows() != static_cast<Eigen::Index>(C.size()) || Zk.cols() != Zk.rows())
      throw std::invalid_argument("scatter_sum: block " + std::to_string(k) + " shape mismatch");
    for (std::size_t a = 0; a < C.size(); ++a)
      for (std::size_t b = 0; b < C.size(); ++b) X(C[a] - 1, C[b] - 1) += Zk(a, b);
  }
  return X;
}

Eigen::MatrixXd scatter_sum(const std::vector<Eigen::MatrixXd>& blocks, const SdpProblem& problem) {
  return scatter_sum(blocks, problem.solver_blocks(), problem.profile.N() + 1);
}

FeasibilityCheck check_feasible_dense(const Eigen::MatrixXd& Z, double tol) {
  if (Z.rows() != Z.cols()) throw std::invalid_argument("check_feasible_dense: not square");
  const double asym = (Z - Z.transpose()).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, Z.cwiseAbs().maxCoeff());
  if (asym > 1e-9 * scale)
    throw std::invalid_argument("check_feasible_dense: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (Z + Z.transpose()),
                                              Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("check_feasible_dense: eigensolver failed");
  FeasibilityCheck out;
  out.lambda_max = eig.eigenvalues().maxCoeff();
  out.feasible = out.lambda_max <= tol;
  return out;
}

int VecOps::position_of(int i, int j) const {
  const auto it = position_index.find(static_cast<std::int64_t>(j) * dim + i);
  return it == position_index.end() ? -1 : it->second;
}

Eigen::VectorXd VecOps::gather(int k, const Eigen::VectorXd& x) const {
  const auto& idx = gather_index[k];
  VectorXd out(idx.size());
  for (std::size_t t = 0; t < idx.size(); ++t) out[t] = x[idx[t]];
  return out;
}

void VecOps::scatter_add(int k, const Eigen::VectorXd& xk, Eigen::VectorXd& x) const {
  const auto& idx = gather_index[k];
  for (std::size_t t = 0; t < idx.size(); ++t) x[idx[t]] += xk[t];
}

Eigen::MatrixXd VecOps::to_matrix(const Eigen::VectorXd& x) const {
  MatrixXd M = MatrixXd::Zero(dim, dim);
  for (std::size_t p = 0; p < positions.size(); ++p)
    M(positions[p].first, positions[p].second) = x[p];
  return M;
}

Eigen::VectorXd VecOps::from_matrix(const Eigen::MatrixXd& M) const {
  if (M.rows() != dim || M.cols() != dim)
    throw std::invalid_argument("from_matrix: dimension mismatch");
  VectorXd x(vec_length());
  for (std::size_t p = 0; p < positions.size(); ++p)
    x[p] = M(positions[p].first, positions[p].second);
  // everything off the covered positions must be zero
  MatrixXd R = M - to_matrix(x);
  if (R.cwiseAbs().maxCoeff() > 0.0)
    throw std::invalid_argument("from_matrix: matrix has support outside the covered positions");
  return x;
}

Eigen::SparseMatrix<double> VecOps::hk_matrix(int k) const {
  const auto& idx = gather_index[k];
  SparseMatrix<double> H(static_cast<int>(idx.size()), vec_length());
  std::vector<Eigen::Triplet<double>> t;
  for (std::size_t r = 0; r < idx.size(); ++r)
    t.emplace_back(static_cast<int>(r), idx[r], 1.0);
  H.setFromTriplets(t.begin(), t.end());
  return H;
}

VecOps make_vec_ops(const qcbuild::AffineMatrixMap& zmap,
                    const std::vector<std::vector<int>>& blocks) {
  if (blocks.empty()) throw std::invalid_argument("make_vec_ops: no blocks");
  VecOps ops;
  ops.dim = zmap.dim;
  ops.blocks = blocks;

  std::vector<std::int64_t> keys;
  for (const auto& B : blocks) {
    for (int a : B)
      for (int b : B) keys.push_back(static_cast<std::int64_t>(b - 1) * ops.dim + (a - 1));
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  ops.positions.reserve(keys.size());
  ops.position_index.reserve(keys.size() * 2);
  for (std::int64_t key : keys) {
    const int j = static_cast<int>(key / ops.dim), i = static_cast<int>(key % ops.dim);
    ops.position_index.emplace(key, static_cast<int>(ops.positions.size()));
    ops.positions.emplace_back(i, j);
  }

  ops.D = VectorXd::Zero(ops.vec_length());
  for (const auto& B : blocks) {
    const int bs = static_cast<int>(B.size());
    std::vector<int> idx(static_cast<std::size_t>(bs) * bs);
    for (int c = 0; c < bs; ++c)
      for (int r = 0; r < bs; ++r) {
        const std::int64_t key =
            static_cast<std::int64_t>(B[c] - 1) * ops.dim + (B[r] - 1);
        const int pos = ops.position_index.at(key);
        idx[static_cast<std::size_t>(c) * bs + r] = pos;
        ops.D[pos] += 1.0;
      }
    ops.gather_index.push_back(std::move(idx));
  }

  const auto restricted_index = [&](int row, int col) {
    const auto it = ops.position_index.find(static_cast<std::int64_t>(col) * ops.dim + row);
    if (it == ops.position_index.end())
      throw std::invalid_argument("make_vec_ops: matrix entry (" + std::to_string(row + 1) + ", " +
                                  std::to_string(col + 1) + ") is outside the clique coverage");
    return it->second;
  };

  std::vector<Eigen::Triplet<double>> jt;
  for (int i = 0; i < zmap.param_count(); ++i)
    for (int k = 0; k < zmap.basis[i].outerSize(); ++k)
      for (SparseMatrix<double>::InnerIterator it(zmap.basis[i], k); it; ++it)
        jt.emplace_back(restricted_index(static_cast<int>(it.row()), static_cast<int>(it.col())),
                        i, it.value());
  ops.J = SparseMatrix<double>(ops.vec_length(), zmap.param_count());
  ops.J.setFromTriplets(jt.begin(), jt.end());

  ops.z0 = VectorXd::Zero(ops.vec_length());
  for (int k = 0; k < zmap.base.outerSize(); ++k)
    for (SparseMatrix<double>::InnerIterator it(zmap.base, k); it; ++it)
      ops.z0[restricted_index(static_cast<int>(it.row()), static_cast<int>(it.col()))] =
          it.value();
  return ops;
}

VecOps vec_ops(const SdpProblem& problem) {
  const auto blocks = problem.solver_blocks();
  if (blocks.empty())
    throw std::invalid_argument("vec_ops: dense problem has no clique decomposition");
  return make_vec_ops(problem.zmap, blocks);
}

namespace {

void append_entry(SdpaData& data, int var, int block, int i, int j, double value) {
  if (value == 0.0) return;
  data.entries.push_back({var, block, i, j, value});
}

}  // namespace

void write_sdpa(const SdpaData& data, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  std::fprintf(f, "%d\n", data.nvars);
  std::fprintf(f, "%zu\n", data.block_sizes.size());
  for (std::size_t k = 0; k < data.block_sizes.size(); ++k)
    std::fprintf(f, "%d%c", data.block_sizes[k], k + 1 == data.block_sizes.size() ? '\n' : ' ');
  for (int i = 0; i < data.nvars; ++i)
    std::fprintf(f, "%.17g%c", data.objective[i], i + 1 == data.nvars ? '\n' : ' ');
  for (const auto& e : data.entries)
    std::fprintf(f, "%d %d %d %d %.17g\n", e.var, e.block, e.i, e.j, e.value);
  if (std::fclose(f) != 0) throw std::runtime_error("write failed: " + path);
}

void export_sdpa(const SdpProblem& problem, const std::string& path) {
  const qcbuild::AffineMatrixMap& zmap = problem.zmap;
  const int ngamma = zmap.param_count();
  if (ngamma == 0)
    throw std::invalid_argument("export_sdpa: problem has no gamma parameters");

  SdpaData data;
  if (problem.mode == Mode::dense) {
    // one SDP block carrying -Z(gamma), one LP block for gamma >= 0
    data.nvars = ngamma;
    data.block_sizes = {zmap.dim, -ngamma};
    data.objective.assign(ngamma, 1.0);
    for (int i = 0; i < ngamma; ++i)
      for (int k = 0; k < zmap.basis[i].outerSize(); ++k)
        for (SparseMatrix<double>::InnerIterator it(zmap.basis[i], k); it; ++it)
          if (it.row() <= it.col())
            append_entry(data, i + 1, 1, static_cast<int>(it.row()) + 1,
                         static_cast<int>(it.col()) + 1, -it.value());
    for (int k = 0; k < zmap.base.outerSize(); ++k)
      for (SparseMatrix<double>::InnerIterator it(zmap.base, k); it; ++it)
        if (it.row() <= it.col())
          append_entry(data, 0, 1, static_cast<int>(it.row()) + 1,
                       static_cast<int>(it.col()) + 1, it.value());
    for (int i = 0; i < ngamma; ++i) append_entry(data, i + 1, 2, i + 1, i + 1, 1.0);
    write_sdpa(data, path);
    return;
  }

  // One SDP block per solver block (holding -Z_k), the equality
  // Z(gamma) = sum_k E^T Z_k E written as paired LP rows on the covered
  // upper-triangle positions, and gamma >= 0 in the same LP block.
  const auto blocks = problem.solver_blocks();
  const VecOps ops = vec_ops(problem);
  const int nblocks = static_cast<int>(blocks.size());

  std::vector<int> var_offset(nblocks);  // first variable id of block k's entries
  int nvars = ngamma;
  for (int k = 0; k < nblocks; ++k) {
    var_offset[k] = nvars;
    const int bs = static_cast<int>(blocks[k].size());
    nvars += bs * (bs + 1) / 2;
  }
  const auto tri_index = [](int bs, int a, int b) {  // a <= b, 0-based row-major upper
    return a * bs - a * (a - 1) / 2 + (b - a);
  };

  std::vector<std::pair<int, int>> upper;  // covered positions with i <= j
  for (const auto& [i, j] : ops.positions)
    if (i <= j) upper.emplace_back(i, j);
  const int neq = static_cast<int>(upper.size());

  data.nvars = nvars;
  data.block_sizes.reserve(nblocks + 1);
  for (const auto& B : blocks) data.block_sizes.push_back(static_cast<int>(B.size()));
  data.block_sizes.push_back(-(ngamma + 2 * neq));
  data.objective.assign(nvars, 0.0);
  for (int i = 0; i < ngamma; ++i) data.objective[i] = 1.0;

  // SDP blocks: -Z_k
  for (int k = 0; k < nblocks; ++k) {
    const int bs = static_cast<int>(blocks[k].size());
    for (int a = 0; a < bs; ++a)
      for (int b = a; b < bs; ++b)
        append_entry(data, var_offset[k] + tri_index(bs, a, b) + 1, k + 1, a + 1, b + 1, -1.0);
  }

  const int lp = nblocks + 1;
  // gamma >= 0
  for (int i = 0; i < ngamma; ++i) append_entry(data, i + 1, lp, i + 1, i + 1, 1.0);

  // equality rows: sum_k z^k_ab - (J gamma)_pos = z0_pos, as >= and <=
  const Eigen::SparseMatrix<double, Eigen::RowMajor> Jrow(ops.J);
  for (int e = 0; e < neq; ++e) {
    const auto [i, j] = upper[e];
    const int pos = ops.position_of(i, j);
    const int row_ge = ngamma + 2 * e + 1, row_le = row_ge + 1;
    const auto emit = [&](int var, double coeff) {
      append_entry(data, var, lp, row_ge, row_ge, coeff);
      append_entry(data, var, lp, row_le, row_le, -coeff);
    };
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Jrow, pos); it; ++it)
      emit(static_cast<int>(it.col()) + 1, -it.value());
    for (int k = 0; k < nblocks; ++k) {
      // local indices of (i, j) within block k, if covered
      const auto& B = blocks[k];
      const auto la = std::lower_bound(B.begin(), B.end(), i + 1);
      const auto lb = std::lower_bound(B.begin(), B.end(), j + 1);
      if (la == B.end() || *la != i + 1 || lb == B.end() || *lb != j + 1) continue;
      const int a = static_cast<int>(la - B.begin()), b = static_cast<int>(lb - B.begin());
      const int bs = static_cast<int>(B.size());
      emit(var_offset[k] + tri_index(bs, std::min(a, b), std::max(a, b)) + 1, 1.0);
    }
    emit(0, ops.z0[pos]);
  }
  write_sdpa(data, path);
}

SdpaData import_sdpa(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open SDPA file: " + path);
  std::stringstream clean;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && (line[0] == '"' || line[0] == '*')) continue;
    for (char& c : line)
      if (c == ',' || c == '(' || c == ')' || c == '{' || c == '}') c = ' ';
    clean << line << '\n';
  }
  SdpaData data;
  if (!(clean >> data.nvars)) throw std::runtime_error("SDPA parse error: nvars");
  int nblocks = 0;
  if (!(clean >> nblocks) || nblocks < 1) throw std::runtime_error("SDPA parse error: nblocks");
  data.block_sizes.resize(nblocks);
  for (int k = 0; k < nblocks; ++k)
    if (!(clean >> data.block_sizes[k])) throw std::runtime_error("SDPA parse error: block sizes");
  data.objective.resize(data.nvars);
  for (int i = 0; i < data.nvars; ++i)
    if (!(clean >> data.objective[i])) throw std::runtime_error("SDPA parse error: objective");
  SdpaData::Entry e{};
  while (clean >> e.var >> e.block >> e.i >> e.j >> e.value) {
    if (e.var < 0 || e.var > data.nvars || e.block < 1 || e.block > nblocks)
      throw std::runtime_error("SDPA parse error: entry indices out of range");
    data.entries.push_back(e);
  }
  return data;
}

}  // namespace chordalverify::sdpcore
