// strack: synthesize sequences, train the estimator, track, evaluate, selftest.
// Exit codes: 0 success, 1 internal failure, 2 user or input error.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "strack/eval.hpp"
#include "strack/model_file.hpp"
#include "strack/selftest.hpp"
#include "strack/suites.hpp"
#include "strack/train.hpp"

namespace fs = std::filesystem;
using namespace strack;

namespace {

// Input problems the user can fix; mapped to exit code 2.
struct UserError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class E>
E pick(const std::string& value, const std::map<std::string, E>& table, const char* flag) {
  const auto it = table.find(value);
  if (it == table.end()) throw UserError(std::string("bad value '") + value + "' for " + flag);
  return it->second;
}

const std::map<std::string, StreamMode> kStreams{
    {"both", StreamMode::both}, {"spatial", StreamMode::spatial}, {"temporal", StreamMode::temporal}};
const std::map<std::string, FusionMode> kFusion{{"sum", FusionMode::sum}, {"concat", FusionMode::concat}};
const std::map<std::string, bool> kOnOff{{"on", true}, {"off", false}};
const std::map<std::string, Pooling> kPooling{{"awp", Pooling::awp}, {"gap", Pooling::gap}};
const std::map<std::string, ScorerKind> kScorers{{"learned", ScorerKind::learned}, {"oracle", ScorerKind::oracle}};

// Ablation switches shared by train and track; empty means "keep the default".
struct Switches {
  std::string stream, fusion, attention, pooling, scorer;

  void add(CLI::App* cmd, bool with_stream_and_scorer) {
    if (with_stream_and_scorer) {
      cmd->add_option("--stream", stream, "both|spatial|temporal")->check(CLI::IsMember({"both", "spatial", "temporal"}));
      cmd->add_option("--scorer", scorer, "learned|oracle")->check(CLI::IsMember({"learned", "oracle"}));
    }
    cmd->add_option("--fusion", fusion, "sum|concat")->check(CLI::IsMember({"sum", "concat"}));
    cmd->add_option("--attention", attention, "on|off")->check(CLI::IsMember({"on", "off"}));
    cmd->add_option("--pooling", pooling, "awp|gap")->check(CLI::IsMember({"awp", "gap"}));
  }

  void apply(TrackerConfig& c) const {
    if (!stream.empty()) c.stream = pick(stream, kStreams, "--stream");
    if (!fusion.empty()) c.fusion = pick(fusion, kFusion, "--fusion");
    if (!attention.empty()) c.switches.attention = pick(attention, kOnOff, "--attention");
    if (!pooling.empty()) c.switches.pooling = pick(pooling, kPooling, "--pooling");
    if (!scorer.empty()) c.scorer = pick(scorer, kScorers, "--scorer");
  }
};

// Data parallelism cap. Every kernel here is single-threaded, so the value
// is only validated.
void check_threads() {
  const char* v = std::getenv("STRACK_THREADS");
  if (!v || !*v) return;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw UserError(std::string("STRACK_THREADS must be a positive integer, got '") + v + "'");
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  std::string spec, suite, out;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a) {
  if (a.spec.empty() == a.suite.empty()) throw UserError("synth needs exactly one of --spec or --suite");
  if (!a.spec.empty()) {
    generate(read_spec(a.spec), a.seed, a.out);
    std::printf("wrote %s\n", a.out.c_str());
    return 0;
  }
  std::vector<SequenceSpec> specs;
  if (a.suite == "easy") specs = easy_suite(a.seed);
  else if (a.suite == "fast") specs = fast_suite(a.seed);
  else specs = training_suite(a.seed);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%s_%02zu", a.suite.c_str(), i);
    const fs::path dir = fs::path(a.out) / name;
    generate(specs[i], a.seed + 1 + i, dir);
    std::ofstream(dir / "spec.txt") << format_spec(specs[i]);
  }
  std::printf("wrote %zu sequences under %s\n", specs.size(), a.out.c_str());
  return 0;
}

// ---- train ----------------------------------------------------------------

// A data directory is either a sequence or a directory of sequences.
std::vector<fs::path> sequence_dirs(const std::vector<std::string>& roots) {
  std::vector<fs::path> out;
  for (const auto& r : roots) {
    const fs::path root(r);
    if (!fs::is_directory(root)) throw UserError("data directory not found: " + r);
    if (fs::exists(root / "groundtruth.txt")) {
      out.push_back(root);
      continue;
    }
    std::vector<fs::path> subs;
    for (const auto& e : fs::directory_iterator(root)) {
      if (e.is_directory() && fs::exists(e.path() / "groundtruth.txt")) subs.push_back(e.path());
    }
    if (subs.empty()) throw UserError("no sequences under " + r);
    std::sort(subs.begin(), subs.end());
    out.insert(out.end(), subs.begin(), subs.end());
  }
  return out;
}

struct TrainArgs {
  std::vector<std::string> data;
  std::string out;
  int epochs = 30;
  int samples = 500;
  std::uint64_t seed = 0;
  Switches switches;
};

int cmd_train(const TrainArgs& a) {
  std::vector<Sequence> seqs;
  for (const auto& d : sequence_dirs(a.data)) seqs.push_back(read_sequence(d));
  TrackerConfig cfg;
  a.switches.apply(cfg);
  cfg.seed = a.seed;
  std::printf("training on %zu sequences, %d samples, %d epochs\n", seqs.size(), a.samples, a.epochs);
  TrainResult r;
  try {
    r = train_model(seqs, cfg, a.seed, a.epochs, a.samples);
  } catch (const NumericError& e) {
    throw UserError(std::string("training diverged: ") + e.what());
  }
  const FitReport& rep = r.report;
  std::printf("crops %zu  target variance %.6f  initial mse %.6f\n", r.crops, rep.baseline_mse, rep.initial_mse);
  for (std::size_t i = 0; i < rep.epoch_mse.size(); ++i) std::printf("epoch %3zu  mse %.6f\n", i + 1, rep.epoch_mse[i]);
  save_model(a.out, r.model);
  std::printf("final mse %.6f (%.3f of variance), wrote %s\n", rep.epoch_mse.back(),
              rep.epoch_mse.back() / rep.baseline_mse, a.out.c_str());
  return 0;
}

// ---- track ----------------------------------------------------------------

struct TrackArgs {
  std::string seq, model, out, diag;
  std::uint64_t seed = 0;
  Switches switches;
};

int cmd_track(const TrackArgs& a) {
  const Model model = load_model(a.model);
  const Sequence seq = read_sequence(a.seq);
  TrackerConfig cfg = model.defaults;
  a.switches.apply(cfg);
  cfg.seed = a.seed;
  check_compatible(model, cfg);

  const auto reports = track_sequence(seq, model, cfg);
  std::vector<Box> boxes;
  for (const auto& r : reports) boxes.push_back(r.box);
  write_results(a.out, boxes);

  if (!a.diag.empty()) {
    std::ofstream d(a.diag);
    if (!d) throw UserError("cannot write " + a.diag);
    for (const auto& r : reports) {
      nlohmann::json j{{"frame", r.frame},     {"box", {r.box.x, r.box.y, r.box.w, r.box.h}},
                       {"peak", r.peak},       {"lost", r.lost},
                       {"updated", r.updated}, {"iou", iou(r.box, seq.groundtruth[r.frame - 1])}};
      if (r.updated) j["update_trace"] = r.update_trace;
      d << j.dump() << '\n';
    }
  }
  if (seq.frames.size() > 1) {
    const OpeReport ope = evaluate_sequence(boxes, seq.groundtruth);
    std::printf("frames %zu  mean IoU %.4f  AUC %.4f  Pre@20 %.4f\n", seq.frames.size(), ope.mean_iou,
                ope.success.auc, ope.precision.at_20);
  }
  return 0;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> pred, gt, names;
  std::string out;
};

std::vector<Box> read_truth(const std::string& path) {
  const fs::path p(path);
  if (fs::is_directory(p)) return read_boxes(p / "groundtruth.txt");
  return read_boxes(p);
}

int cmd_eval(const EvalArgs& a) {
  if (a.gt.size() != 1 && a.gt.size() != a.pred.size()) {
    throw UserError("--gt needs one entry or one per --pred entry");
  }
  if (!a.names.empty() && a.names.size() != a.pred.size()) throw UserError("--name needs one tag per --pred entry");
  // Runs sharing a name are averaged, in first-seen order.
  std::vector<std::string> order;
  std::map<std::string, std::vector<OpeReport>> groups;
  for (std::size_t i = 0; i < a.pred.size(); ++i) {
    const std::string name = a.names.empty() ? fs::path(a.pred[i]).stem().string() : a.names[i];
    const auto pred = read_results(a.pred[i]);
    const auto gt = read_truth(a.gt.size() == 1 ? a.gt[0] : a.gt[i]);
    if (pred.size() != gt.size()) {
      throw UserError(a.pred[i] + " has " + std::to_string(pred.size()) + " boxes, ground truth has " +
                      std::to_string(gt.size()));
    }
    if (!groups.count(name)) order.push_back(name);
    groups[name].push_back(evaluate_sequence(pred, gt));
  }
  std::vector<NamedReport> runs;
  for (const auto& name : order) runs.push_back({name, average_reports(groups[name])});
  std::fputs(compare(runs).c_str(), stdout);
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    for (const auto& r : runs) write_curve_files(fs::path(a.out) / r.name, r.report);
  }
  return 0;
}

// ---- selftest -------------------------------------------------------------

int cmd_selftest(const std::string& fault) {
  if (!fault.empty() && fault != "vjp") throw UserError("unknown fault '" + fault + "'");
  SelftestOptions o;
  o.corrupt_vjp = fault == "vjp";
  o.on_result = [](const SelftestCheck& c) {
    std::printf("%s %s: %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
    std::fflush(stdout);
  };
  const auto t0 = std::chrono::steady_clock::now();
  const auto checks = run_selftest(o);
  int failed = 0;
  for (const auto& c : checks) failed += !c.passed;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%zu checks, %d failed, %.1f s\n", checks.size(), failed, secs);
  return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"strack: spatio-temporal tracking toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic sequence from a spec file, or a seeded suite");
  s->add_option("--spec", synth.spec, "spec file");
  s->add_option("--suite", synth.suite, "easy|fast|train")->check(CLI::IsMember({"easy", "fast", "train"}));
  s->add_option("--out", synth.out, "output directory")->required();
  s->add_option("--seed", synth.seed, "seed");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Fit the FAMs and IoU head offline and store a model");
  t->add_option("--data", train.data, "sequence directories, or directories of sequences")
      ->required()
      ->delimiter(',');
  t->add_option("--out", train.out, "model file")->required();
  t->add_option("--epochs", train.epochs, "epochs")->check(CLI::PositiveNumber);
  t->add_option("--samples", train.samples, "candidate boxes in the training set")->check(CLI::PositiveNumber);
  t->add_option("--seed", train.seed, "seed");
  train.switches.add(t, false);

  TrackArgs track;
  auto* k = app.add_subcommand("track", "Track one sequence and write a results file");
  k->add_option("--seq", track.seq, "sequence directory")->required();
  k->add_option("--model", track.model, "model file")->required();
  k->add_option("--out", track.out, "results file")->required();
  k->add_option("--seed", track.seed, "seed");
  k->add_option("--diag", track.diag, "per-frame diagnostics, JSON lines");
  track.switches.add(k, true);

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Success/precision metrics and a comparison table");
  e->add_option("--pred", eval.pred, "results files")->required()->delimiter(',');
  e->add_option("--gt", eval.gt, "sequence directories or ground-truth files")->required()->delimiter(',');
  e->add_option("--name", eval.names, "run tag per results file; repeated tags are averaged")->delimiter(',');
  e->add_option("--out", eval.out, "directory for curve files");

  std::string fault;
  auto* st = app.add_subcommand("selftest", "Gradient, solver and determinism checks");
  st->add_option("--inject-fault", fault)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    check_threads();
    if (*s) return cmd_synth(synth);
    if (*t) return cmd_train(train);
    if (*k) return cmd_track(track);
    if (*e) return cmd_eval(eval);
    if (*st) return cmd_selftest(fault);
  } catch (const UserError& err) {
    std::fprintf(stderr, "strack: %s\n", err.what());
    return 2;
  } catch (const FormatError& err) {
    std::fprintf(stderr, "strack: %s\n", err.what());
    return 2;
  } catch (const std::invalid_argument& err) {  // SpecError, ConfigError, length checks
    std::fprintf(stderr, "strack: %s\n", err.what());
    return 2;
  } catch (const fs::filesystem_error& err) {
    std::fprintf(stderr, "strack: %s\n", err.what());
    return 2;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "strack: internal error: %s\n", err.what());
    return 1;
  }
  return 1;
}
