#include "secdfl/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "secdfl/adversary.hpp"
#include "secdfl/fedtrain.hpp"
#include "secdfl/simnet.hpp"
#include "secdfl/sweep.hpp"

namespace secdfl {

namespace {

namespace fs = std::filesystem;

// Relative output paths land in $SECDFL_OUT_DIR when set.
fs::path resolve_out(const std::string& path) {
  fs::path p(path);
  if (p.is_absolute()) return p;
  const char* dir = std::getenv("SECDFL_OUT_DIR");
  if (dir != nullptr && *dir != '\0') return fs::path(dir) / p;
  return p;
}

void guard_overwrite(const fs::path& p, bool force) {
  if (!force && fs::exists(p))
    fail(Errc::Refused,
         "refusing to overwrite " + p.string() + " (pass --force)");
}

void write_text(const fs::path& p, const std::string& content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  require(os.good(), Errc::Io, "cannot open " + p.string() + " for writing");
  os << content;
  os.flush();
  require(os.good(), Errc::Io, "failed writing " + p.string());
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::Io, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::Io, path + ": " + e.what());
  }
}

// Full argument vector plus the resolved seed, so a copy-paste reproduces the
// outputs byte for byte.
void print_repro(const std::vector<std::string>& args, bool seed_given,
                 std::uint64_t seed) {
  std::cout << "# reproduce: secdfl";
  for (const std::string& a : args) std::cout << ' ' << a;
  if (!seed_given) std::cout << " --seed " << seed;
  std::cout << '\n';
}

std::vector<ParamVector> parse_inputs(const nlohmann::json& j) {
  nlohmann::json peers;
  std::vector<std::int64_t> shape;
  if (j.is_array()) {
    peers = j;
  } else {
    require(j.contains("peers"), Errc::Io,
            "inputs json: expected an array of arrays or {\"peers\": [...]}");
    peers = j.at("peers");
    if (j.contains("shape"))
      shape = j.at("shape").get<std::vector<std::int64_t>>();
  }
  require(peers.is_array() && !peers.empty(), Errc::Io,
          "inputs json: empty peer list");
  std::vector<ParamVector> ws;
  for (const auto& row : peers) {
    std::vector<double> data = row.get<std::vector<double>>();
    Vec v = Eigen::Map<const Vec>(data.data(),
                                  static_cast<Eigen::Index>(data.size()));
    ws.push_back(shape.empty() ? ParamVector::flat(std::move(v))
                               : ParamVector::with_shape(std::move(v), shape));
  }
  return ws;
}

struct TrainSettings {
  int rounds = 50;
  int local_epochs = 1;
  int batch_size = 32;
  double learning_rate = 0.1;
  int peers = 9;
  int samples_per_peer = 200;
  int dim = 20;
  int classes = 3;
  double heterogeneity = 0.9;
  double separation = 4.0;
  std::string model = "logreg";
  int hidden = 16;
  double rho = 1.0;
  int admm_iterations = 2;
  int s = 3;
  bool lambda_zero = false;
  bool unsafe = false;
};

void apply_config_file(TrainSettings& ts, const nlohmann::json& cfg) {
  const std::string schema = cfg.value("schema", "");
  require(schema == "secdfl-config/1", Errc::Io,
          "config: expected \"schema\": \"secdfl-config/1\"");
  auto get = [&cfg](const char* key, auto& slot) {
    if (cfg.contains(key)) slot = cfg.at(key).get<std::decay_t<decltype(slot)>>();
  };
  get("rounds", ts.rounds);
  get("local_epochs", ts.local_epochs);
  get("batch_size", ts.batch_size);
  get("learning_rate", ts.learning_rate);
  get("peers", ts.peers);
  get("samples_per_peer", ts.samples_per_peer);
  get("dim", ts.dim);
  get("classes", ts.classes);
  get("heterogeneity", ts.heterogeneity);
  get("separation", ts.separation);
  get("model", ts.model);
  get("hidden", ts.hidden);
  get("rho", ts.rho);
  get("admm_iterations", ts.admm_iterations);
  get("s", ts.s);
  get("lambda_zero", ts.lambda_zero);
  get("unsafe", ts.unsafe);
}

int cmd_schedule_gen(int n, int s, std::uint64_t seed, const SearchBudget& budget,
                     const std::string& out, bool force) {
  GroupSchedule sch = generate_schedule(n, s, seed, budget);
  ValidationReport report = validate_schedule(sch);
  if (!report.valid())
    fail(Errc::InvalidArgument,
         "generated schedule failed validation: " + report.violations.front());
  fs::path path = resolve_out(out);
  guard_overwrite(path, force);
  write_text(path, schedule_to_json(sch).dump(2) + "\n");
  std::cout << "schedule: n=" << n << " s=" << s << " classes=" << sch.gap()
            << " (gap " << sch.gap() << ", secure horizon "
            << max_secure_iterations(sch).max_iterations << ") -> "
            << path.string() << '\n';
  return 0;
}

int cmd_schedule_check(const std::string& file) {
  GroupSchedule sch = schedule_from_json(read_json_file(file));
  ValidationReport report = validate_schedule(sch);
  if (report.valid()) {
    std::cout << "valid: n=" << sch.n << " s=" << sch.s << " gap=" << sch.gap()
              << '\n';
    return 0;
  }
  for (const std::string& v : report.violations)
    std::cout << "violation: " << v << '\n';
  return 1;
}

int cmd_aggregate(const std::string& inputs_file, double rho, int iters,
                  const std::string& mode, const std::string& schedule_file,
                  std::uint64_t seed, bool lambda_zero, bool unsafe,
                  const std::string& out, const std::string& csv,
                  const std::string& transcript, bool force) {
  std::vector<ParamVector> ws = parse_inputs(read_json_file(inputs_file));

  AdmmConfig cfg;
  cfg.rho = rho;
  cfg.iterations = iters;
  cfg.lambda_init = lambda_zero ? LambdaInit::Zero : LambdaInit::Uniform01;
  cfg.unsafe_override = unsafe;
  if (mode == "grouped") {
    require(!schedule_file.empty(), Errc::InvalidArgument,
            "grouped mode needs --schedule");
    cfg.mode = AggMode::Grouped;
    cfg.schedule = schedule_from_json(read_json_file(schedule_file));
  } else {
    require(mode == "all", Errc::InvalidArgument,
            "mode must be 'all' or 'grouped'");
  }

  AggregationResult result;
  if (!transcript.empty()) {
    SimResult sim = run_simulation(ws, cfg, seed);
    fs::path tpath = resolve_out(transcript);
    guard_overwrite(tpath, force);
    std::ostringstream os;
    write_transcript_jsonl(sim.transcript, os);
    write_text(tpath, os.str());
    result = std::move(sim.engine);
  } else {
    result = run_aggregation(ws, cfg, seed);
  }

  nlohmann::json zj;
  zj["z"] = std::vector<double>(result.z.data(), result.z.data() + result.z.size());
  zj["shape"] = ws.front().shape;
  zj["iterations"] = iters;
  zj["rho"] = rho;
  fs::path zpath = resolve_out(out);
  guard_overwrite(zpath, force);
  write_text(zpath, zj.dump(2) + "\n");

  if (!csv.empty()) {
    std::string body = "iteration,residual_l2,max_dual_sum\n";
    char buf[96];
    for (const IterationTrace& t : result.traces) {
      std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", t.iteration,
                    t.residual_l2, t.max_dual_sum);
      body += buf;
    }
    fs::path cpath = resolve_out(csv);
    guard_overwrite(cpath, force);
    write_text(cpath, body);
  }
  std::cout << "consensus after " << iters << " iterations -> "
            << zpath.string() << " (final residual "
            << result.traces.back().residual_l2 << ")\n";
  return 0;
}

int cmd_attack(const std::string& transcript_file, int observer, int target,
               int iters, bool include_group_sums, const std::string& out,
               bool force) {
  std::ifstream in(transcript_file);
  require(in.good(), Errc::Io, "cannot open " + transcript_file);
  Transcript tr = read_transcript_jsonl(in);
  ObserverView view = peer_view(tr, observer);
  const int T = iters > 0 ? iters : tr.iterations;
  LinearSystem sys = assemble_system(view, target, T, include_group_sums);
  ReconstructionResult result = solve(sys);

  nlohmann::json j;
  j["observer"] = observer;
  j["target"] = target;
  j["iterations"] = T;
  j["status"] = result.status == ReconstructionResult::Status::Unique
                    ? "unique"
                    : "underdetermined";
  j["rank"] = result.rank;
  j["nullity"] = result.nullity;
  j["unknowns"] = result.unknown_count;
  j["equations"] = result.equation_count;
  j["unknown_convention"] =
      "w, x^1..x^T, lambda^0..lambda^T, plus y^i columns where the target "
      "was not observed";
  if (result.w_hat) {
    j["w_hat"] = std::vector<double>(
        result.w_hat->data.data(),
        result.w_hat->data.data() + result.w_hat->data.size());
    j["solve_residual"] = result.solve_residual;
  }
  const std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!out.empty()) {
    fs::path path = resolve_out(out);
    guard_overwrite(path, force);
    write_text(path, text);
  }
  return result.status == ReconstructionResult::Status::Unique ? 0 : 4;
}

int cmd_train(const std::string& mode_str, const TrainSettings& ts,
              const std::string& data_arg, std::uint64_t seed,
              const std::string& out, bool force) {
  TrainMode mode;
  if (mode_str == "secured") mode = TrainMode::SecureDFL;
  else if (mode_str == "fedavg") mode = TrainMode::FedAvg;
  else if (mode_str == "local") mode = TrainMode::LocalOnly;
  else fail(Errc::InvalidArgument, "mode must be secured, fedavg, or local");

  std::vector<LocalDataset> data;
  if (data_arg == "synth") {
    data = make_synthetic(ts.peers, ts.samples_per_peer, ts.dim,
                          ts.heterogeneity, derive_seed(seed, "data"),
                          ts.classes, ts.separation);
  } else if (data_arg.rfind("csv:", 0) == 0) {
    data = load_csv_datasets(data_arg.substr(4), ts.peers,
                             derive_seed(seed, "data"));
  } else {
    fail(Errc::InvalidArgument, "--data must be 'synth' or 'csv:<path>'");
  }

  FLConfig cfg;
  cfg.rounds = ts.rounds;
  cfg.local_epochs = ts.local_epochs;
  cfg.batch_size = ts.batch_size;
  cfg.learning_rate = ts.learning_rate;
  cfg.n = ts.peers;
  cfg.seed = seed;
  cfg.model.input_dim = static_cast<int>(data.front().x_train.cols());
  cfg.model.hidden = ts.hidden;
  if (ts.model == "linreg") {
    cfg.model.kind = ModelKind::LinearRegression;
  } else if (ts.model == "logreg" || ts.model == "mlp") {
    cfg.model.kind = ts.model == "logreg" ? ModelKind::LogisticRegression
                                          : ModelKind::TwoLayerPerceptron;
    int classes = 0;
    for (const auto& d : data) {
      classes = std::max(classes, static_cast<int>(d.y_train.maxCoeff()) + 1);
      classes = std::max(classes, static_cast<int>(d.y_test.maxCoeff()) + 1);
    }
    cfg.model.classes = std::max(2, classes);
  } else {
    fail(Errc::InvalidArgument, "model must be linreg, logreg, or mlp");
  }

  if (mode == TrainMode::SecureDFL) {
    cfg.aggregation = Aggregation::SecureAgg;
    cfg.admm.rho = ts.rho;
    cfg.admm.iterations = ts.admm_iterations;
    cfg.admm.lambda_init =
        ts.lambda_zero ? LambdaInit::Zero : LambdaInit::Uniform01;
    cfg.admm.unsafe_override = ts.unsafe;
    require(ts.peers % ts.s == 0, Errc::InvalidArgument,
            "secured mode: group size s must divide the peer count");
    cfg.admm.mode = AggMode::Grouped;
    cfg.admm.schedule =
        generate_schedule(ts.peers, ts.s, derive_seed(seed, "sched"));
  } else if (mode == TrainMode::FedAvg) {
    cfg.aggregation = Aggregation::CentralMean;
  } else {
    cfg.aggregation = Aggregation::None;
  }

  TrainingReport report = train(mode, cfg, data);
  fs::path path = resolve_out(out);
  guard_overwrite(path, force);
  nlohmann::json j = report_to_json(report);
  j["seed"] = seed;
  write_text(path, j.dump(2) + "\n");
  std::cout << "mode=" << mode_str << " rounds=" << ts.rounds
            << " final_accuracy=" << report.final_accuracy << " -> "
            << path.string() << '\n';
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"secdfl: gap-scheduled secure ADMM aggregation simulator"};
  app.require_subcommand(1);

  std::uint64_t seed = 42;
  bool force = false;

  // schedule gen / check
  auto* sched = app.add_subcommand("schedule", "build or validate group schedules");
  sched->require_subcommand(1);
  auto* gen = sched->add_subcommand("gen", "generate a schedule");
  int gen_n = 9, gen_s = 3;
  SearchBudget budget;
  int target_classes = 0;
  std::string gen_out = "schedule.json";
  gen->add_option("--n", gen_n, "peer count")->required();
  gen->add_option("--s", gen_s, "group size")->required();
  gen->add_option("--seed", seed, "RNG seed (default 42)");
  gen->add_option("--attempts", budget.max_sample_attempts_per_class,
                  "sampling attempts per class");
  gen->add_option("--restarts", budget.max_class_restarts, "class restarts");
  gen->add_option("--target", target_classes, "stop after this many classes");
  gen->add_option("--out", gen_out, "output schedule path");
  gen->add_flag("--force", force, "overwrite existing outputs");

  auto* check = sched->add_subcommand("check", "validate a schedule file");
  std::string check_file;
  check->add_option("file", check_file, "schedule json")->required();

  // aggregate
  auto* agg = app.add_subcommand("aggregate", "run consensus averaging");
  std::string agg_inputs, agg_mode = "all", agg_schedule, agg_out = "z.json";
  std::string agg_csv, agg_transcript;
  double agg_rho = 1.0;
  int agg_iters = 2;
  bool lambda_zero = false, unsafe = false;
  agg->add_option("--inputs", agg_inputs, "json file with peer inputs")->required();
  agg->add_option("--rho", agg_rho, "penalty parameter");
  agg->add_option("--iters", agg_iters, "iteration count");
  agg->add_option("--mode", agg_mode, "all | grouped");
  agg->add_option("--schedule", agg_schedule, "schedule json (grouped mode)");
  agg->add_option("--seed", seed, "RNG seed (default 42)");
  agg->add_flag("--lambda-zero", lambda_zero, "start duals at zero");
  agg->add_flag("--unsafe", unsafe, "override the secure iteration horizon");
  agg->add_option("--out", agg_out, "consensus output json");
  agg->add_option("--csv", agg_csv, "per-iteration csv path");
  agg->add_option("--transcript", agg_transcript, "message transcript jsonl");
  agg->add_flag("--force", force, "overwrite existing outputs");

  // attack
  auto* atk = app.add_subcommand(
      "attack", "reconstruct a peer's input from a transcript "
                "(exit 0 = unique recovery, 4 = underdetermined)");
  std::string atk_transcript, atk_out;
  int atk_observer = 0, atk_target = 0, atk_iters = 0;
  bool atk_group_sums = false;
  atk->add_option("--transcript", atk_transcript, "transcript jsonl")->required();
  atk->add_option("--observer", atk_observer, "observing peer id")->required();
  atk->add_option("--target", atk_target, "target peer id")->required();
  atk->add_option("--iters", atk_iters, "horizon T (default: all recorded)");
  atk->add_flag("--include-group-sums", atk_group_sums,
                "force partial-sum equations into the system");
  atk->add_option("--out", atk_out, "also write the result json here");
  atk->add_flag("--force", force, "overwrite existing outputs");

  // train
  auto* tr = app.add_subcommand("train", "federated training loop");
  std::string tr_mode, tr_config, tr_data = "synth", tr_out = "report.json";
  TrainSettings ts;
  tr->add_option("--mode", tr_mode, "secured | fedavg | local")->required();
  tr->add_option("--config", tr_config, "json config (schema secdfl-config/1)");
  tr->add_option("--data", tr_data, "synth | csv:<path>");
  tr->add_option("--out", tr_out, "report json path");
  tr->add_option("--seed", seed, "RNG seed (default 42)");
  tr->add_option("--rounds", ts.rounds, "federated rounds");
  tr->add_option("--epochs", ts.local_epochs, "local epochs per round");
  tr->add_option("--batch", ts.batch_size, "mini-batch size");
  tr->add_option("--lr", ts.learning_rate, "learning rate");
  tr->add_option("--peers", ts.peers, "peer count");
  tr->add_option("--rho", ts.rho, "aggregation penalty parameter");
  tr->add_option("--agg-iters", ts.admm_iterations, "aggregation iterations");
  tr->add_option("--model", ts.model, "linreg | logreg | mlp");
  tr->add_flag("--unsafe", ts.unsafe, "override the secure iteration horizon");
  tr->add_flag("--force", force, "overwrite existing outputs");

  // sweep iters / schedule
  auto* sweep = app.add_subcommand("sweep", "experiment sweeps");
  sweep->require_subcommand(1);
  auto* sw_it = sweep->add_subcommand("iters", "mean MSE by iteration count");
  int sw_n = 9, sw_s = 3, sw_dim = 10000, sw_iters_max = 7, sw_seeds = 5;
  double sw_rho = 0.1;
  std::string sw_out = "sweep_iters.csv", sw_report = "sweep_iters.json";
  sw_it->add_option("--n", sw_n, "peer count");
  sw_it->add_option("--s", sw_s, "group size");
  sw_it->add_option("--rho", sw_rho, "penalty parameter");
  sw_it->add_option("--dim", sw_dim, "checkpoint dimension");
  sw_it->add_option("--iters-max", sw_iters_max, "largest iteration count")
      ->check(CLI::PositiveNumber);
  sw_it->add_option("--seeds", sw_seeds, "checkpoint seeds");
  sw_it->add_option("--seed", seed, "RNG seed (default 42)");
  sw_it->add_option("--out", sw_out, "csv path");
  sw_it->add_option("--report", sw_report, "report json path");
  sw_it->add_flag("--unsafe", unsafe, "override the secure iteration horizon");
  sw_it->add_flag("--force", force, "overwrite existing outputs");

  auto* sw_sc = sweep->add_subcommand("schedule", "class counts by peer count");
  std::vector<int> sw_ns = {9, 15, 21, 27};
  int sc_s = 3, sc_seeds = 20;
  std::string sc_out = "sweep_schedule.csv";
  sw_sc->add_option("--n-list", sw_ns, "peer counts")->delimiter(',');
  sw_sc->add_option("--s", sc_s, "group size");
  sw_sc->add_option("--seeds", sc_seeds, "seeds per n");
  sw_sc->add_option("--seed", seed, "RNG seed (default 42)");
  sw_sc->add_option("--attempts", budget.max_sample_attempts_per_class,
                    "sampling attempts per class");
  sw_sc->add_option("--restarts", budget.max_class_restarts, "class restarts");
  sw_sc->add_option("--out", sc_out, "csv path");
  sw_sc->add_flag("--force", force, "overwrite existing outputs");

  std::vector<std::string> argv_copy = args;
  try {
    std::vector<const char*> argv;
    argv.push_back("secdfl");
    for (const std::string& a : argv_copy) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  auto seed_given = [&](const CLI::App* sub) {
    return sub->count("--seed") > 0;
  };

  try {
    if (gen->parsed()) {
      if (target_classes > 0) budget.target_classes = target_classes;
      print_repro(args, seed_given(gen), seed);
      return cmd_schedule_gen(gen_n, gen_s, seed, budget, gen_out, force);
    }
    if (check->parsed()) {
      return cmd_schedule_check(check_file);
    }
    if (agg->parsed()) {
      print_repro(args, seed_given(agg), seed);
      return cmd_aggregate(agg_inputs, agg_rho, agg_iters, agg_mode,
                           agg_schedule, seed, lambda_zero, unsafe, agg_out,
                           agg_csv, agg_transcript, force);
    }
    if (atk->parsed()) {
      return cmd_attack(atk_transcript, atk_observer, atk_target, atk_iters,
                        atk_group_sums, atk_out, force);
    }
    if (tr->parsed()) {
      if (!tr_config.empty()) {
        TrainSettings from_file;
        apply_config_file(from_file, read_json_file(tr_config));
        // precedence: flags > config file > defaults
        auto keep = [&tr](const char* flag) { return tr->count(flag) > 0; };
        if (!keep("--rounds")) ts.rounds = from_file.rounds;
        if (!keep("--epochs")) ts.local_epochs = from_file.local_epochs;
        if (!keep("--batch")) ts.batch_size = from_file.batch_size;
        if (!keep("--lr")) ts.learning_rate = from_file.learning_rate;
        if (!keep("--peers")) ts.peers = from_file.peers;
        if (!keep("--rho")) ts.rho = from_file.rho;
        if (!keep("--agg-iters")) ts.admm_iterations = from_file.admm_iterations;
        if (!keep("--model")) ts.model = from_file.model;
        if (!keep("--unsafe")) ts.unsafe = from_file.unsafe;
        ts.samples_per_peer = from_file.samples_per_peer;
        ts.dim = from_file.dim;
        ts.classes = from_file.classes;
        ts.heterogeneity = from_file.heterogeneity;
        ts.separation = from_file.separation;
        ts.hidden = from_file.hidden;
        ts.s = from_file.s;
        ts.lambda_zero = from_file.lambda_zero;
      }
      print_repro(args, seed_given(tr), seed);
      return cmd_train(tr_mode, ts, tr_data, seed, tr_out, force);
    }
    if (sw_it->parsed()) {
      print_repro(args, seed_given(sw_it), seed);
      IterSweepResult r = sweep_iterations(sw_n, sw_s, sw_rho, sw_dim,
                                           sw_iters_max, sw_seeds, seed, unsafe);
      fs::path cpath = resolve_out(sw_out);
      guard_overwrite(cpath, force);
      write_text(cpath, iter_sweep_csv(r));
      nlohmann::json j;
      j["n"] = r.n;
      j["dim"] = r.dim;
      j["rho"] = r.rho;
      j["seeds"] = r.seeds;
      j["seed"] = seed;
      j["mse_below_1e13_at"] = r.mse_below_1e13_at;
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& row : r.rows)
        rows.push_back({{"iterations", row.iterations}, {"mean_mse", row.mean_mse}});
      j["rows"] = std::move(rows);
      fs::path rpath = resolve_out(sw_report);
      guard_overwrite(rpath, force);
      write_text(rpath, j.dump(2) + "\n");
      std::cout << "mean MSE drops below 1e-13 at iteration "
                << r.mse_below_1e13_at << " -> " << cpath.string() << '\n';
      return 0;
    }
    if (sw_sc->parsed()) {
      print_repro(args, seed_given(sw_sc), seed);
      std::vector<ScheduleSweepRow> rows =
          sweep_schedule(sw_ns, sc_s, sc_seeds, budget, seed);
      fs::path cpath = resolve_out(sc_out);
      guard_overwrite(cpath, force);
      write_text(cpath, schedule_sweep_csv(rows));
      std::cout << "schedule sweep -> " << cpath.string() << '\n';
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error (" << errc_name(e.code()) << "): " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace secdfl
