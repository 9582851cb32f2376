#include <benchmark/benchmark.h>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "chordalverify/admm.hpp"
#include "chordalverify/chordal.hpp"
#include "chordalverify/nnmodel.hpp"
#include "chordalverify/qcbuild.hpp"
#include "chordalverify/rng.hpp"
#include "chordalverify/sdpcore.hpp"
#include "chordalverify/verify.hpp"

using namespace chordalverify;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_symmetric(Rng& rng, int n) {
  MatrixXd M(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M(i, j) = rng.normal();
  return 0.5 * (M + M.transpose());
}

struct SolverSetup {
  sdpcore::SdpProblem problem;
  admm::Prepared prep;
};

SolverSetup reach_setup(int width, int depth, int beta, sdpcore::Mode mode) {
  const auto net =
      nnmodel::random_network(width, depth, 2, 2, nnmodel::SigmaMode::scalability, 77);
  const VectorXd lo = VectorXd::Constant(2, 0.5), hi = VectorXd::Constant(2, 1.5);
  const auto [y_c, P] = verify::estimate_ellipsoid(net, lo, hi, 2000, 1e-3, 7);
  const auto bounds = nnmodel::interval_bounds(net, lo, hi);
  const auto assembly = qcbuild::assemble_Z(net, qcbuild::InputSpec::make_box(lo, hi),
                                            qcbuild::safety_ellipsoid(P, y_c, 1.0, 2), beta,
                                            true, &bounds);
  SolverSetup s;
  s.problem = sdpcore::build_problem(assembly.zmap, chordal::DimProfile::of(net), beta, mode);
  s.prep = admm::prepare(s.problem);
  return s;
}

}  // namespace

static void BM_ProjectNsd(benchmark::State& state) {
  Rng rng(1);
  const MatrixXd M = random_symmetric(rng, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(admm::project_nsd(M));
}
BENCHMARK(BM_ProjectNsd)->Arg(13)->Arg(23)->Arg(33)->Arg(65);

static void BM_DenseEig(benchmark::State& state) {
  Rng rng(2);
  const MatrixXd M = random_symmetric(rng, static_cast<int>(state.range(0)));
  for (auto _ : state) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(M);
    benchmark::DoNotOptimize(eig.eigenvalues());
  }
}
BENCHMARK(BM_DenseEig)->Arg(103)->Arg(203)->Arg(403);

// one full ADMM iteration (gamma/v, z, lambda) on the chordal2 decomposition
static void BM_AdmmIteration(benchmark::State& state) {
  const int depth = static_cast<int>(state.range(0));
  SolverSetup s = reach_setup(10, depth, 2, sdpcore::Mode::chordal2);
  admm::AdmmOptions opts;
  opts.eps_primal = opts.eps_dual = 0.0;
  opts.adapt_rho = false;
  opts.final_certificate_check = false;
  opts.max_iter = 1;
  opts.check_every = 1 << 20;
  auto cache = admm::make_solver_cache(s.prep, opts);
  auto st = admm::zero_state(s.prep.ops);
  for (auto _ : state)
    benchmark::DoNotOptimize(admm::solve_prepared(s.prep, opts, nullptr, &st, &cache));
}
BENCHMARK(BM_AdmmIteration)->Arg(10)->Arg(20)->Arg(40)->Unit(benchmark::kMicrosecond);

static void BM_CliqueEnumeration(benchmark::State& state) {
  chordal::DimProfile profile;
  profile.dims = std::vector<int>(8, 5);
  profile.m = 2;
  const auto fbeta = chordal::chordal_extension(profile, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(chordal::enumerate_maximal_cliques(fbeta));
}
BENCHMARK(BM_CliqueEnumeration)->Arg(0)->Arg(3)->Arg(6);

static void BM_AssembleZ(benchmark::State& state) {
  const int depth = static_cast<int>(state.range(0));
  const auto net =
      nnmodel::random_network(10, depth, 2, 2, nnmodel::SigmaMode::scalability, 5);
  const VectorXd lo = VectorXd::Constant(2, 0.5), hi = VectorXd::Constant(2, 1.5);
  const auto bounds = nnmodel::interval_bounds(net, lo, hi);
  const auto input = qcbuild::InputSpec::make_box(lo, hi);
  const auto safety = qcbuild::safety_l2gain(1.0, 2, 2);
  for (auto _ : state)
    benchmark::DoNotOptimize(qcbuild::assemble_Z(net, input, safety, 2, true, &bounds));
}
BENCHMARK(BM_AssembleZ)->Arg(10)->Arg(40)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
