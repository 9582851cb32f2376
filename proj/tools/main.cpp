// chordal-verify: SDP-based safety verification and reachability analysis for
// feedforward networks with tunable chordal decomposition.
//
// Subcommands: verify, reach, sparsity, gen, export.
// Exit codes: 0 = certified / success, 2 = not certified, 1 = error.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "chordalverify/admm.hpp"
#include "chordalverify/chordal.hpp"
#include "chordalverify/nnmodel.hpp"
#include "chordalverify/qcbuild.hpp"
#include "chordalverify/rng.hpp"
#include "chordalverify/sdpcore.hpp"
#include "chordalverify/verify.hpp"

namespace nn = chordalverify::nnmodel;
namespace qc = chordalverify::qcbuild;
namespace ch = chordalverify::chordal;
namespace sdp = chordalverify::sdpcore;
namespace admm = chordalverify::admm;
namespace vfy = chordalverify::verify;
using nlohmann::json;

namespace {

int log_level() {  // 0 quiet, 1 info, 2 debug
  const char* env = std::getenv("CHORDAL_VERIFY_LOG");
  if (!env) return 1;
  const std::string v(env);
  if (v == "quiet") return 0;
  if (v == "debug") return 2;
  return 1;
}

void log_info(const std::string& msg) {
  if (log_level() >= 1) std::fprintf(stderr, "[chordal-verify] %s\n", msg.c_str());
}

struct SolverFlags {
  double rho = 1.0;
  int max_iter = 20000;
  double eps = 1e-7;
  int check_every = 25;
  double final_tol = 1e-6;
  int jobs = 1;
  std::string trace;

  void attach(CLI::App* cmd) {
    cmd->add_option("--rho", rho, "ADMM penalty parameter");
    cmd->add_option("--max-iter", max_iter, "ADMM iteration cap");
    cmd->add_option("--eps", eps, "primal/dual residual tolerance");
    cmd->add_option("--check-every", check_every, "iterations between convergence checks");
    cmd->add_option("--final-tol", final_tol, "lambda_max tolerance of the certificate check");
    cmd->add_option("--jobs", jobs, "worker threads for per-block projections");
    cmd->add_option("--trace", trace, "CSV file for iteration traces");
  }

  admm::AdmmOptions options() const {
    admm::AdmmOptions o;
    o.rho = rho;
    o.max_iter = max_iter;
    o.eps_primal = eps;
    o.eps_dual = eps;
    o.check_every = check_every;
    o.final_tol = final_tol;
    o.jobs = jobs;
    o.trace_path = trace;
    return o;
  }
};

json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json matrix_to_json(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

void emit_json(const json& j, const std::string& out_path) {
  const std::string text = j.dump(2) + "\n";
  if (out_path.empty())
    std::fputs(text.c_str(), stdout);
  else
    write_text(out_path, text);
}

void append_csv_line(const std::string& path, const std::string& header,
                     const std::string& line) {
  const bool fresh = !std::ifstream(path).good();
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  if (fresh) out << header << "\n";
  out << line << "\n";
}

struct SpecArg {
  enum class Kind { l2gain, ellipsoid } kind = Kind::l2gain;
  double value = 0.0;  // kappa or rho
  bool has_value = false;
};

SpecArg parse_spec(const std::string& s) {
  SpecArg arg;
  const auto colon = s.find(':');
  const std::string head = s.substr(0, colon);
  if (head == "l2gain")
    arg.kind = SpecArg::Kind::l2gain;
  else if (head == "ellipsoid")
    arg.kind = SpecArg::Kind::ellipsoid;
  else
    throw CLI::ValidationError("--spec", "expected l2gain:K or ellipsoid[:RHO]");
  if (colon != std::string::npos) {
    arg.value = std::stod(s.substr(colon + 1));
    arg.has_value = true;
  }
  if (arg.kind == SpecArg::Kind::l2gain && !arg.has_value)
    throw CLI::ValidationError("--spec", "l2gain needs a value, e.g. l2gain:10");
  return arg;
}

void check_beta_range(int beta, const ch::DimProfile& profile) {
  const int limit = profile.N() - profile.dims[0] - 1;
  if (beta < 0 || beta > limit)
    throw std::out_of_range("--beta " + std::to_string(beta) + " out of range [0, " +
                            std::to_string(limit) + "]");
}

struct CommonArgs {
  std::string net_path;
  std::vector<double> box;  // LO HI
  std::string spec_str = "l2gain:1";
  int beta = 0;
  std::string mode_str = "chordal2";
  std::string adjacent = "on";
  int samples = 100000;
  double reg = 1e-3;
  std::uint64_t seed = 0;
  std::string out;

  void attach(CLI::App* cmd, bool with_spec) {
    cmd->add_option("--net", net_path, "network JSON file")->required();
    cmd->add_option("--box", box, "input box LO HI (uniform over all inputs)")
        ->expected(2)
        ->required();
    if (with_spec) cmd->add_option("--spec", spec_str, "safety spec: l2gain:K or ellipsoid[:RHO]");
    cmd->add_option("--beta", beta, "band width of the sector QC");
    cmd->add_option("--mode", mode_str, "dense|chordal|chordal2");
    cmd->add_option("--adjacent", adjacent, "adjacent-layer interval QCs: on|off");
    cmd->add_option("--samples", samples, "sample count for ellipsoid estimation");
    cmd->add_option("--reg", reg, "covariance regularization for the ellipsoid shape");
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--out", out, "output JSON path (stdout if omitted)");
  }

  nn::Network load_net() const { return nn::load_network(net_path); }
  Eigen::VectorXd box_lo(int n1) const { return Eigen::VectorXd::Constant(n1, box[0]); }
  Eigen::VectorXd box_hi(int n1) const { return Eigen::VectorXd::Constant(n1, box[1]); }
  bool use_adjacent() const {
    if (adjacent == "on") return true;
    if (adjacent == "off") return false;
    throw CLI::ValidationError("--adjacent", "expected on|off");
  }
  sdp::Mode mode() const { return sdp::mode_from_string(mode_str); }
};

qc::SafetyMatrix build_safety(const SpecArg& spec, const nn::Network& net,
                              const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                              const CommonArgs& args, json& echo) {
  if (spec.kind == SpecArg::Kind::l2gain) {
    echo["spec"] = {{"kind", "l2gain"}, {"kappa", spec.value}};
    return qc::safety_l2gain(spec.value, net.input_dim(), net.output_dim());
  }
  const auto [y_c, P] = vfy::estimate_ellipsoid(net, lo, hi, args.samples, args.reg, args.seed);
  const double rho = spec.has_value ? spec.value : 1.0;
  echo["spec"] = {{"kind", "ellipsoid"},
                  {"rho", rho},
                  {"y_c", vector_to_json(y_c)},
                  {"P_shape", matrix_to_json(P)}};
  return qc::safety_ellipsoid(P, y_c, rho, net.input_dim());
}

json config_echo(const CommonArgs& args) {
  return json{{"net", args.net_path},       {"box", args.box},
              {"beta", args.beta},          {"mode", args.mode_str},
              {"adjacent", args.adjacent},  {"samples", args.samples},
              {"reg", args.reg},            {"seed", args.seed}};
}

int cmd_verify(const CommonArgs& args, const SolverFlags& solver, const std::string& csv) {
  const nn::Network net = args.load_net();
  const ch::DimProfile profile = ch::DimProfile::of(net);
  check_beta_range(args.beta, profile);
  const Eigen::VectorXd lo = args.box_lo(net.input_dim()), hi = args.box_hi(net.input_dim());

  json result;
  result["config"] = config_echo(args);
  const SpecArg spec = parse_spec(args.spec_str);

  vfy::VerifyRequest req;
  req.net = net;
  req.input = qc::InputSpec::make_box(lo, hi);
  req.safety = build_safety(spec, net, lo, hi, args, result["config"]);
  req.beta = args.beta;
  req.mode = args.mode();
  req.use_adjacent = args.use_adjacent();
  req.opts = solver.options();

  const vfy::VerifyResult res = vfy::verify_safety(req);
  result["certified"] = res.certified;
  result["status"] = admm::to_string(res.solution.status);
  result["lambda_max"] = res.solution.lambda_max;
  result["iters"] = res.solution.iters;
  result["primal_res"] = res.solution.primal_res;
  result["dual_res"] = res.solution.dual_res;
  result["gamma"] = vector_to_json(res.solution.gamma);
  result["timings"] = {{"wall_time", res.wall_time}};
  emit_json(result, args.out);
  if (!csv.empty())
    append_csv_line(csv, "net,beta,mode,iters,wall_time,status",
                    args.net_path + "," + std::to_string(args.beta) + "," + args.mode_str + "," +
                        std::to_string(res.solution.iters) + "," +
                        std::to_string(res.wall_time) + "," +
                        admm::to_string(res.solution.status));
  log_info(std::string("verify: ") + (res.certified ? "certified" : "not certified"));
  return res.certified ? 0 : 2;
}

int cmd_reach(const CommonArgs& args, const std::vector<int>& betas, const SolverFlags& solver,
              const vfy::BisectOptions& bisect, const std::string& points_out,
              const std::string& csv) {
  const nn::Network net = args.load_net();
  const ch::DimProfile profile = ch::DimProfile::of(net);
  std::vector<int> beta_list = betas.empty() ? std::vector<int>{args.beta} : betas;
  for (int b : beta_list) check_beta_range(b, profile);
  const Eigen::VectorXd lo = args.box_lo(net.input_dim()), hi = args.box_hi(net.input_dim());

  const auto [y_c, P] = vfy::estimate_ellipsoid(net, lo, hi, args.samples, args.reg, args.seed);
  const auto results = vfy::reach_sweep(net, lo, hi, y_c, P, beta_list, args.mode(),
                                        args.use_adjacent(), bisect, solver.options());

  json result;
  result["config"] = config_echo(args);
  result["y_c"] = vector_to_json(y_c);
  result["P_shape"] = matrix_to_json(P);
  json per_beta = json::array();
  double wall_total = 0.0;
  bool all_certified = true;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    json trace = json::array();
    for (const auto& [rho, ok] : r.trace) trace.push_back({{"rho", rho}, {"certified", ok}});
    per_beta.push_back({{"beta", beta_list[i]},
                        {"certified", r.certified},
                        {"rho_star", r.rho_star},
                        {"tol", r.tol_used},
                        {"iters", r.total_iters},
                        {"trace", std::move(trace)}});
    wall_total += r.wall_time;
    all_certified = all_certified && r.certified;
    if (!csv.empty())
      append_csv_line(csv, "net,beta,mode,iters,wall_time,status",
                      args.net_path + "," + std::to_string(beta_list[i]) + "," + args.mode_str +
                          "," + std::to_string(r.total_iters) + "," +
                          std::to_string(r.wall_time) + "," +
                          (r.certified ? "certified" : "no_certificate"));
  }
  result["results"] = std::move(per_beta);
  result["timings"] = {{"wall_time", wall_total}};
  emit_json(result, args.out);

  if (!points_out.empty()) {
    chordalverify::Rng rng(args.seed);
    std::ostringstream pts;
    for (int i = 0; i < net.input_dim(); ++i) pts << "x" << i + 1 << ",";
    for (int i = 0; i < net.output_dim(); ++i)
      pts << "y" << i + 1 << (i + 1 == net.output_dim() ? "" : ",");
    pts << "\n";
    const int n_points = std::min(args.samples, 10000);
    char buf[64];
    for (int s = 0; s < n_points; ++s) {
      Eigen::VectorXd x(net.input_dim());
      for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.uniform_in(lo[i], hi[i]);
      const Eigen::VectorXd y = nn::eval(net, x);
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,", x[i]);
        pts << buf;
      }
      for (Eigen::Index i = 0; i < y.size(); ++i) {
        std::snprintf(buf, sizeof buf, i + 1 == y.size() ? "%.17g" : "%.17g,", y[i]);
        pts << buf;
      }
      pts << "\n";
    }
    write_text(points_out, pts.str());
  }
  log_info("reach: " + std::to_string(results.size()) + " beta value(s) done");
  return all_certified ? 0 : 2;
}

int cmd_sparsity(const std::string& net_path, std::vector<int> dims, int beta,
                 const std::string& out) {
  ch::DimProfile profile;
  if (!net_path.empty()) {
    profile = ch::DimProfile::of(nn::load_network(net_path));
  } else {
    if (dims.size() < 2) throw std::invalid_argument("--dims needs at least n_1, n_2");
    profile.dims = dims;
    profile.m = dims.back();
  }
  check_beta_range(beta, profile);

  const auto edges_json = [](const ch::EdgeSet& e) {
    json a = json::array();
    for (const auto& [i, j] : e.edges()) a.push_back({i, j});
    return a;
  };
  const ch::EdgeSet ebeta = ch::pattern_E_beta(profile, beta);
  const ch::EdgeSet fbeta = ch::chordal_extension(profile, beta);
  const ch::CliqueSet cliques = ch::closed_form_cliques(profile, beta);

  json j;
  j["dims"] = profile.dims;
  j["N"] = profile.N();
  j["beta"] = beta;
  j["vertices"] = profile.N() + 1;
  j["E_beta"] = edges_json(ebeta);
  j["F_beta"] = edges_json(fbeta);
  j["families"] = {{"M", edges_json(ch::pattern_family_M(profile, beta))},
                   {"arrow", edges_json(ch::pattern_family_arrow(profile))},
                   {"corner", edges_json(ch::pattern_family_corner(profile))}};
  j["p"] = static_cast<int>(cliques.cliques.size());
  j["cliques"] = cliques.cliques;
  emit_json(j, out);
  return 0;
}

int cmd_gen(const std::string& out_dir, const std::string& grid, std::vector<int> widths,
            std::vector<int> depths, const std::string& sigma, int in_dim, int out_dim,
            std::uint64_t seed, int jobs) {
  if (grid == "scalability") {
    widths = {10, 20};
    depths.clear();
    for (int d = 5; d <= 50; d += 5) depths.push_back(d);
  } else if (!grid.empty()) {
    throw std::invalid_argument("unknown --grid: " + grid);
  }
  if (widths.empty() || depths.empty())
    throw std::invalid_argument("gen needs --grid scalability or --width/--depth lists");
  const nn::SigmaMode mode =
      sigma == "reachability" ? nn::SigmaMode::reachability : nn::SigmaMode::scalability;
  if (sigma != "reachability" && sigma != "scalability")
    throw std::invalid_argument("--sigma must be scalability or reachability");

  struct Cell {
    int width, depth;
  };
  std::vector<Cell> cells;
  for (int w : widths)
    for (int d : depths) cells.push_back({w, d});

  const auto write_cell = [&](const Cell& c) {
    const std::uint64_t cell_seed = seed * 1000003ULL + c.width * 101ULL + c.depth;
    const nn::Network net = nn::random_network(c.width, c.depth, in_dim, out_dim, mode, cell_seed);
    const std::string path = out_dir + "/net_w" + std::to_string(c.width) + "_d" +
                             std::to_string(c.depth) + "_" + sigma + ".json";
    nn::save_network(net, path);
  };
  if (jobs <= 1) {
    for (const auto& c : cells) write_cell(c);
  } else {
    std::vector<std::thread> threads;
    const int nthreads = std::min<int>(jobs, static_cast<int>(cells.size()));
    for (int t = 0; t < nthreads; ++t)
      threads.emplace_back([&, t] {
        for (std::size_t i = t; i < cells.size(); i += nthreads) write_cell(cells[i]);
      });
    for (auto& th : threads) th.join();
  }
  log_info("gen: wrote " + std::to_string(cells.size()) + " network files to " + out_dir);
  return 0;
}

int cmd_export(const CommonArgs& args, const std::string& out_path) {
  const nn::Network net = args.load_net();
  const ch::DimProfile profile = ch::DimProfile::of(net);
  check_beta_range(args.beta, profile);
  const Eigen::VectorXd lo = args.box_lo(net.input_dim()), hi = args.box_hi(net.input_dim());
  json echo;
  const SpecArg spec = parse_spec(args.spec_str);
  const qc::SafetyMatrix safety = build_safety(spec, net, lo, hi, args, echo);

  nn::LayerBounds bounds;
  const bool adj = args.use_adjacent();
  if (adj) bounds = nn::interval_bounds(net, lo, hi);
  qc::ZAssembly assembly = qc::assemble_Z(net, qc::InputSpec::make_box(lo, hi), safety,
                                          args.beta, adj, adj ? &bounds : nullptr);
  const sdp::SdpProblem problem =
      sdp::build_problem(std::move(assembly.zmap), profile, args.beta, args.mode());
  sdp::export_sdpa(problem, out_path);
  log_info("export: wrote " + out_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SDP-based neural network verification with tunable chordal decomposition"};
  app.require_subcommand(1);

  CommonArgs verify_args, reach_args, export_args;
  SolverFlags verify_solver, reach_solver;
  std::string verify_csv, reach_csv;

  CLI::App* verify = app.add_subcommand("verify", "certify a safety spec");
  verify_args.attach(verify, true);
  verify_solver.attach(verify);
  verify->add_option("--csv", verify_csv, "append a runtime CSV line");

  CLI::App* reach = app.add_subcommand("reach", "minimize the reach ellipsoid radius");
  std::vector<int> reach_betas;
  vfy::BisectOptions bisect;
  std::string points_out;
  reach_args.attach(reach, false);
  reach_solver.attach(reach);
  reach->add_option("--betas", reach_betas, "beta sweep list (overrides --beta)")
      ->delimiter(',');
  reach->add_option("--rho-lo", bisect.rho_lo, "bisection lower bound");
  reach->add_option("--rho-hi", bisect.rho_hi, "starting upper bound (0 = auto)");
  reach->add_option("--rho-tol-rel", bisect.tol_rel, "relative bisection tolerance");
  reach->add_option("--rho-tol-abs", bisect.tol_abs, "absolute bisection tolerance");
  reach->add_option("--points-out", points_out, "CSV of sampled input/output points");
  reach->add_option("--csv", reach_csv, "append runtime CSV lines");

  CLI::App* sparsity = app.add_subcommand("sparsity", "dump E_beta, F_beta and cliques as JSON");
  std::string sp_net, sp_out;
  std::vector<int> sp_dims;
  int sp_beta = 0;
  sparsity->add_option("--net", sp_net, "network JSON file");
  sparsity->add_option("--dims", sp_dims, "layer sizes n_1..n_K")->delimiter(',');
  sparsity->add_option("--beta", sp_beta, "band width");
  sparsity->add_option("--out", sp_out, "output JSON path");

  CLI::App* gen = app.add_subcommand("gen", "generate random benchmark networks");
  std::string gen_dir = ".", gen_grid, gen_sigma = "scalability";
  std::vector<int> gen_widths, gen_depths;
  int gen_in = 2, gen_out = 2, gen_jobs = 1;
  std::uint64_t gen_seed = 0;
  gen->add_option("--out-dir", gen_dir, "output directory");
  gen->add_option("--grid", gen_grid, "preset grid: scalability (widths 10,20 x depths 5..50)");
  gen->add_option("--width", gen_widths, "hidden widths")->delimiter(',');
  gen->add_option("--depth", gen_depths, "hidden depths")->delimiter(',');
  gen->add_option("--sigma", gen_sigma, "weight scale: scalability|reachability");
  gen->add_option("--in-dim", gen_in, "input dimension");
  gen->add_option("--out-dim", gen_out, "output dimension");
  gen->add_option("--seed", gen_seed, "base seed");
  gen->add_option("--jobs", gen_jobs, "parallel generation threads");

  CLI::App* exp = app.add_subcommand("export", "write the problem in SDPA sparse format");
  export_args.attach(exp, true);
  std::string exp_out = "problem.dat-s";
  exp->add_option("--sdpa-out", exp_out, "output .dat-s path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (verify->parsed()) return cmd_verify(verify_args, verify_solver, verify_csv);
    if (reach->parsed()) {
      if (points_out.empty() && !reach_args.out.empty())
        points_out = reach_args.out + ".points.csv";
      return cmd_reach(reach_args, reach_betas, reach_solver, bisect, points_out, reach_csv);
    }
    if (sparsity->parsed()) return cmd_sparsity(sp_net, sp_dims, sp_beta, sp_out);
    if (gen->parsed())
      return cmd_gen(gen_dir, gen_grid, gen_widths, gen_depths, gen_sigma, gen_in, gen_out,
                     gen_seed, gen_jobs);
    if (exp->parsed()) return cmd_export(export_args, exp_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
