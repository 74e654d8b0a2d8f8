#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "lfdet/errors.hpp"
#include "lfdet/io.hpp"
#include "lfdet/lfsa.hpp"
#include "lfdet/random.hpp"
#include "lfdet/suites.hpp"
#include "lfdet/toy.hpp"

namespace lfdet::cli {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_output(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write '" + path + "'");
  f << text;
  if (!f) throw InputError("failed writing '" + path + "'");
}

io::Config load_config(const std::string& path) {
  return path.empty() ? io::Config::defaults() : io::parse_config(read_file(path));
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Maps library errors onto exit codes and prints them.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitFail;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
  }
  return kExitUsage;
}

}  // namespace

int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out, std::ostream& err) {
  SuiteOptions opt;
  opt.perturb = args.perturb;
  opt.seed = args.seed;
  SuiteReport report;
  if (args.scope == "primitive")
    report = primitive_suite(opt);
  else if (args.scope == "lfsa")
    report = lfsa_suite(opt);
  else if (args.scope == "end2end")
    report = end2end_suite(opt);
  else {
    err << "unknown scope '" << args.scope << "' (expected primitive, lfsa or end2end)\n";
    return kExitUsage;
  }
  return guarded(err, [&] {
    for (const GroupError& g : report.groups)
      out << g.name << " " << fmt("%.3e", g.rel_error) << "\n";
    out << "max_rel_error " << fmt("%.3e", report.max_error()) << " tolerance "
        << fmt("%.0e", report.tolerance) << "\n";
    out << (report.passed() ? "PASS" : "FAIL") << " gradcheck " << report.scope << "\n";
    return report.passed() ? kExitPass : kExitFail;
  });
}

int cmd_cost_report(const CostReportArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const io::Config cfg = load_config(args.config);
    const std::string format = args.format.value_or(cfg.report_format);
    if (format != "json" && format != "text")
      throw ConfigError("format: expected \"json\" or \"text\"");
    const io::CostDocument doc = io::make_cost_document(cfg.levels, cfg.decoupled, cfg.efficient);
    write_output(args.output, format == "json" ? io::emit_cost_report(doc) : io::emit_cost_table(doc),
                 out);
    return kExitPass;
  });
}

int cmd_assign(const AssignArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const io::SceneDocument scene = io::parse_scene(read_file(args.scene));
    const double lambda = args.lambda.value_or(scene.lambda);
    const AssignmentResult result =
        assign_scene(scene.gts, scene.predictions, scene.levels(), lambda, scene.anchor_t);
    write_output(args.output, io::emit_assignment(result), out);
    return kExitPass;
  });
}

int cmd_train_toy(const TrainToyArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const io::Config cfg = load_config(args.config);
    TrainOptions opt;
    opt.steps = args.steps.value_or(cfg.toy.steps);
    opt.lr = args.lr.value_or(cfg.toy.lr);
    opt.seed = args.seed.value_or(cfg.toy.seed);
    ToyModel model = ToyModel::init(cfg.toy_config(), opt.seed);
    const std::vector<double> losses = train(model, opt);

    std::string curve = "step,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i) {
      char line[64];
      std::snprintf(line, sizeof line, "%zu,%.17g\n", i, losses[i]);
      curve += line;
    }
    write_output(args.output, curve, out);
    // Keep stdout a clean curve when the curve itself goes there.
    std::ostream& report = args.output.empty() || args.output == "-" ? err : out;

    const std::size_t window = 25;
    if (losses.size() < 2 * window) {
      report << "window check skipped: needs at least " << 2 * window << " steps\n";
      return kExitPass;
    }
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < window; ++i) {
      first += losses[i];
      last += losses[losses.size() - 1 - i];
    }
    first /= window;
    last /= window;
    const double ratio = last / first;
    report << "initial_window_mean " << fmt("%.6f", first) << "\n";
    report << "final_window_mean " << fmt("%.6f", last) << "\n";
    report << "ratio " << fmt("%.4f", ratio) << "\n";
    const bool pass = ratio <= 0.5;
    report << (pass ? "PASS" : "FAIL") << " final/initial <= 0.5\n";
    return pass ? kExitPass : kExitFail;
  });
}

int cmd_bench(const BenchArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    struct Row {
      BenchSize size;
      LayerCost cost;
      std::uint64_t attn, full;
      double ms;
    };
    std::vector<Row> rows;
    for (const BenchSize& s : args.sizes) {
      const auto [c, h, w] = s;
      if (!c || !h || !w) throw InputError("bench sizes must be positive");
      Rng rng(derive_seed(c * 1000003 + h * 1009 + w, 0));
      const LfsaParams params = LfsaParams::random(c, rng);
      const Tensor x = rng.uniform_tensor({c, h, w}, -1.0, 1.0);
      const std::size_t reps = std::max<std::size_t>(1, args.repeats);
      const auto t0 = std::chrono::steady_clock::now();
      double sink = 0.0;
      for (std::size_t r = 0; r < reps; ++r) sink += lfsa_forward(x, params)[0];
      const double ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() /
          static_cast<double>(reps);
      if (!std::isfinite(sink)) throw NumericError("non-finite LFSa output");
      rows.push_back({s, lfsa_cost(c, h, w), lfsa_attention_macs(c, h, w), full_attention_macs(c, h, w), ms});
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.cost.macs < b.cost.macs; });
    char line[256];
    std::snprintf(line, sizeof line, "%-16s %12s %16s %16s %18s %10s\n", "C,H,W", "forward_ms",
                  "total_macs", "lfsa_attn_macs", "full_attn_macs", "ratio");
    out << line;
    for (const Row& r : rows) {
      const std::string size = std::to_string(r.size[0]) + "," + std::to_string(r.size[1]) + "," +
                               std::to_string(r.size[2]);
      std::snprintf(line, sizeof line, "%-16s %12.3f %16llu %16llu %18llu %10.6f\n", size.c_str(),
                    r.ms, static_cast<unsigned long long>(r.cost.macs),
                    static_cast<unsigned long long>(r.attn), static_cast<unsigned long long>(r.full),
                    static_cast<double>(r.attn) / static_cast<double>(r.full));
      out << line;
    }
    return kExitPass;
  });
}

int cmd_lfsa_check(const LfsaCheckArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    Rng rng(derive_seed(args.seed, 7));
    double oracle_diff = 0.0, shift_diff = 0.0;
    bool identity = true;
    for (std::size_t i = 0; i < args.instances; ++i) {
      const auto c = static_cast<std::size_t>(rng.uniform_int(1, 8));
      const auto h = static_cast<std::size_t>(rng.uniform_int(1, 16));
      const auto w = static_cast<std::size_t>(rng.uniform_int(1, 16));
      const LfsaParams p = LfsaParams::random(c, rng);
      const Tensor x = rng.uniform_tensor({c, h, w}, -1.0, 1.0);
      oracle_diff = std::max(oracle_diff, max_abs_diff(lfsa_forward(x, p), lfsa_oracle(x, p)));

      LfsaParams fresh = LfsaParams::init(c, rng);
      identity = identity && bitwise_equal(lfsa_forward(x, fresh), x);

      const Tensor q = rng.uniform_tensor({h, w}, -1.0, 1.0);
      const Tensor k = rng.uniform_tensor({h, w}, -1.0, 1.0);
      const Tensor v = rng.uniform_tensor({h, w}, -1.0, 1.0);
      const Tensor base = row_attention(q, k, v);
      for (double shift : {-5.0, 1.0, 1e3}) {
        Tensor ks = k;
        for (double& e : ks.data()) e += shift;
        shift_diff = std::max(shift_diff, max_abs_diff(row_attention(q, ks, v), base));
      }
    }
    const bool oracle_ok = oracle_diff < 1e-9, shift_ok = shift_diff < 1e-9;
    out << (oracle_ok ? "PASS" : "FAIL") << " oracle max_abs_diff " << fmt("%.3e", oracle_diff) << "\n";
    out << (identity ? "PASS" : "FAIL") << " residual identity at init\n";
    out << (shift_ok ? "PASS" : "FAIL") << " key shift max_abs_diff " << fmt("%.3e", shift_diff) << "\n";
    return oracle_ok && identity && shift_ok ? kExitPass : kExitFail;
  });
}

namespace {

BenchSize parse_size(const std::string& text) {
  BenchSize s{};
  char tail = 0;
  unsigned long long c = 0, h = 0, w = 0;
  if (std::sscanf(text.c_str(), "%llu,%llu,%llu%c", &c, &h, &w, &tail) != 3)
    throw CLI::ValidationError("--size", "expected C,H,W, got '" + text + "'");
  s = {static_cast<std::size_t>(c), static_cast<std::size_t>(h), static_cast<std::size_t>(w)};
  return s;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Local-feature attention detector toolkit", "lfdet"};
  app.require_subcommand(1);
  int status = kExitPass;

  GradcheckArgs gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck->add_option("--scope", gc.scope, "primitive | lfsa | end2end")->required();
  gradcheck->add_option("--seed", gc.seed, "Seed for random inputs");
  gradcheck->add_option("--inject-fault", gc.perturb)->group("");
  gradcheck->callback([&] { status = cmd_gradcheck(gc, out, err); });

  CostReportArgs cr;
  auto* cost = app.add_subcommand("cost-report", "Head and LFSa parameter/FLOP report");
  cost->add_option("--config", cr.config, "Configuration file (JSON)");
  cost->add_option("--output,-o", cr.output, "Output path (default stdout)");
  cost->add_option("--format", cr.format, "json | text")->check(CLI::IsMember({"json", "text"}));
  cost->callback([&] { status = cmd_cost_report(cr, out, err); });

  AssignArgs as;
  auto* assign = app.add_subcommand("assign", "AB-OTA label assignment for one scene");
  assign->add_option("--scene", as.scene, "Scene document (JSON)")->required();
  assign->add_option("--lambda", as.lambda, "Regression weight in the assignment cost");
  assign->add_option("--output,-o", as.output, "Output path (default stdout)");
  assign->callback([&] { status = cmd_assign(as, out, err); });

  TrainToyArgs tt;
  auto* train = app.add_subcommand("train-toy", "Train the toy detector and write its loss curve");
  train->add_option("--config", tt.config, "Configuration file (JSON)");
  train->add_option("--steps", tt.steps, "Training steps");
  train->add_option("--lr", tt.lr, "Learning rate");
  train->add_option("--seed", tt.seed, "Seed for initialization and the scene stream");
  train->add_option("--out,-o", tt.output, "Loss curve path (default stdout)");
  train->callback([&] { status = cmd_train_toy(tt, out, err); });

  BenchArgs bn;
  std::vector<std::string> sizes;
  auto* bench = app.add_subcommand("bench", "LFSa forward timing and attention MAC comparison");
  bench->add_option("--size", sizes, "C,H,W (repeatable)");
  bench->add_option("--repeats", bn.repeats, "Timed forward passes per size");
  bench->callback([&] {
    for (const std::string& s : sizes) bn.sizes.push_back(parse_size(s));
    if (bn.sizes.empty()) bn.sizes = {{1, 1, 1}, {16, 16, 16}, {32, 32, 32}, {64, 40, 40}};
    status = cmd_bench(bn, out, err);
  });

  LfsaCheckArgs lc;
  auto* check = app.add_subcommand("lfsa-check", "LFSa oracle, identity and shift checks");
  check->add_option("--instances", lc.instances, "Random instances");
  check->add_option("--seed", lc.seed, "Seed");
  check->callback([&] { status = cmd_lfsa_check(lc, out, err); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitPass : kExitUsage;
  }
  return status;
}

}  // namespace lfdet::cli
