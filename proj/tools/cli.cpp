#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

namespace mtid::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code(Errc code) {
  switch (code) {
    case Errc::kInvalidArgument:
    case Errc::kInfeasibleWorld:
    case Errc::kUnsplittableTask:
    case Errc::kScheduleTooShort:
    case Errc::kOutOfRange:
    case Errc::kDegenerateHorizon:
      return kConfigError;
    case Errc::kNonFiniteLoss:
      return kNumericError;
    default:
      return kDataError;
  }
}

Components parse_components(const std::string& s) {
  if (s == "full") return Components::kFull;
  if (s == "bare") return Components::kBare;
  if (s == "no-encoder") return Components::kNoEncoder;
  if (s == "no-refiner") return Components::kNoRefiner;
  throw Error(Errc::kInvalidArgument, "unknown component set '" + s + "'");
}

std::string to_string(Components c) {
  switch (c) {
    case Components::kFull: return "full";
    case Components::kBare: return "bare";
    case Components::kNoEncoder: return "no-encoder";
    case Components::kNoRefiner: return "no-refiner";
  }
  return "?";
}

void apply_components(Components c, interpolation::InterpolationConfig& interp) {
  interp.use_encoder = c == Components::kFull || c == Components::kNoRefiner;
  interp.use_refiner = c == Components::kFull || c == Components::kNoEncoder;
}

Stage parse_stage(const std::string& s) {
  if (s == "classifier") return Stage::kClassifier;
  if (s == "diffusion") return Stage::kDiffusion;
  if (s == "all") return Stage::kAll;
  throw Error(Errc::kInvalidArgument, "unknown stage '" + s + "'");
}

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  world.seed = s;
  train.seed = s;
  classifier_train.seed = s;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(Errc::kInvalidArgument, what); };
  if (horizon < 3 || horizon > 6) fail("horizon must be in {3, 4, 5, 6}");
  world.validate();
  model.unet.validate();
  train.validate();
  if (!(train_fraction > 0 && train_fraction < 1)) fail("train_fraction must be in (0, 1)");
  if (eval.ddim_steps < 1 || eval.ddim_steps > train.diffusion_steps)
    fail("ddim steps must be in [1, diffusion_steps]");
  if (eval.uncertainty < 0) fail("uncertainty sample count must be >= 0");
  if (eval.chunk < 1) fail("eval chunk must be >= 1");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
  if (log_every < 1) fail("log_every must be >= 1");
  if (classifier_train.epochs < 0 || classifier_train.batch_size < 1 || !(classifier_train.learning_rate > 0))
    fail("invalid classifier training options");
  if (sweep.seeds.empty() || sweep.losses.empty() || sweep.mask_losses.empty() || sweep.mask_modes.empty() ||
      sweep.strategies.empty() || sweep.components.empty())
    fail("sweep axes must be non-empty");
}

namespace {

template <typename T, typename F>
json names(const std::vector<T>& v, F to_str) {
  json a = json::array();
  for (const auto& x : v) a.push_back(to_str(x));
  return a;
}

template <typename T, typename F>
std::vector<T> parse_names(const json& a, F parse) {
  std::vector<T> v;
  for (const auto& x : a) v.push_back(parse(x.get<std::string>()));
  return v;
}

void check_keys(const json& patch, const json& reference, const std::string& where) {
  if (!patch.is_object()) return;
  for (const auto& [key, value] : patch.items()) {
    if (!reference.contains(key)) throw Error(Errc::kInvalidArgument, "unknown config key '" + where + key + "'");
    const auto& ref = reference.at(key);
    if (ref.is_object() && !ref.empty() && value.is_object()) check_keys(value, ref, where + key + ".");
  }
}

}  // namespace

json to_json(const RunConfig& c) {
  return {
      {"seed", c.seed},
      {"horizon", c.horizon},
      {"world", synthworld::to_json(c.world)},
      {"train_fraction", c.train_fraction},
      {"model", pipeline::to_json(c.model)},
      {"train", pipeline::to_json(c.train)},
      {"classifier_train",
       {{"epochs", c.classifier_train.epochs},
        {"batch_size", c.classifier_train.batch_size},
        {"learning_rate", c.classifier_train.learning_rate},
        {"seed", c.classifier_train.seed}}},
      {"eval",
       {{"mask_mode", pipeline::to_string(c.eval.mask_mode)},
        {"ddim_steps", c.eval.ddim_steps},
        {"uncertainty", c.eval.uncertainty},
        {"use_classifier", c.eval.use_classifier},
        {"chunk", c.eval.chunk}}},
      {"sweep",
       {{"losses", names(c.sweep.losses, [](auto x) { return objective::to_string(x); })},
        {"mask_losses", names(c.sweep.mask_losses, [](auto x) { return objective::to_string(x); })},
        {"mask_modes", names(c.sweep.mask_modes, [](auto x) { return pipeline::to_string(x); })},
        {"strategies", names(c.sweep.strategies, [](auto x) { return interpolation::to_string(x); })},
        {"components", names(c.sweep.components, [](auto x) { return to_string(x); })},
        {"seeds", c.sweep.seeds}}},
      {"data_dir", c.data_dir},
      {"checkpoint", c.checkpoint},
      {"out", c.out},
      {"checkpoint_every", c.checkpoint_every},
      {"log_every", c.log_every},
  };
}

RunConfig run_config_from_json(const json& patch) {
  const json base = to_json(RunConfig{});
  check_keys(patch, base, "");
  json j = base;
  j.merge_patch(patch);
  RunConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    c.horizon = j.at("horizon").get<int>();
    c.world = synthworld::world_spec_from_json(j.at("world"));
    c.train_fraction = j.at("train_fraction").get<double>();
    c.model = pipeline::model_config_from_json(j.at("model"));
    c.train = pipeline::train_config_from_json(j.at("train"));
    const auto& ct = j.at("classifier_train");
    c.classifier_train.epochs = ct.at("epochs").get<int>();
    c.classifier_train.batch_size = ct.at("batch_size").get<int>();
    c.classifier_train.learning_rate = ct.at("learning_rate").get<double>();
    c.classifier_train.seed = ct.at("seed").get<std::uint64_t>();
    const auto& e = j.at("eval");
    c.eval.mask_mode = pipeline::parse_mask_mode(e.at("mask_mode").get<std::string>());
    c.eval.ddim_steps = e.at("ddim_steps").get<int>();
    c.eval.uncertainty = e.at("uncertainty").get<int>();
    c.eval.use_classifier = e.at("use_classifier").get<bool>();
    c.eval.chunk = e.at("chunk").get<int>();
    const auto& s = j.at("sweep");
    c.sweep.losses = parse_names<objective::LossKind>(s.at("losses"), objective::parse_loss_kind);
    c.sweep.mask_losses =
        parse_names<objective::MaskConvention>(s.at("mask_losses"), objective::parse_mask_convention);
    c.sweep.mask_modes = parse_names<pipeline::MaskMode>(s.at("mask_modes"), pipeline::parse_mask_mode);
    c.sweep.strategies = parse_names<interpolation::Strategy>(s.at("strategies"), interpolation::parse_strategy);
    c.sweep.components = parse_names<Components>(s.at("components"), parse_components);
    c.sweep.seeds = s.at("seeds").get<std::vector<std::uint64_t>>();
    c.data_dir = j.at("data_dir").get<std::string>();
    c.checkpoint = j.at("checkpoint").get<std::string>();
    c.out = j.at("out").get<std::string>();
    c.checkpoint_every = j.at("checkpoint_every").get<int>();
    c.log_every = j.at("log_every").get<int>();
    // A top-level seed feeds every component unless one sets its own.
    if (patch.contains("seed")) {
      const RunConfig nested = c;
      c.set_seed(c.seed);
      auto has = [&](const char* section) { return patch.contains(section) && patch.at(section).contains("seed"); };
      if (has("world")) c.world.seed = nested.world.seed;
      if (has("train")) c.train.seed = nested.train.seed;
      if (has("classifier_train")) c.classifier_train.seed = nested.classifier_train.seed;
    }
  } catch (const json::exception& ex) {
    throw Error(Errc::kInvalidArgument, std::string("run config: ") + ex.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kInvalidArgument, "cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& ex) {
    throw Error(Errc::kInvalidArgument, "config " + path.string() + ": " + ex.what());
  }
  return run_config_from_json(j);
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(Errc::kIo, "cannot write " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIo, "cannot open " + path.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& ex) {
    throw Error(Errc::kMalformedFile, path.string() + ": " + ex.what());
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string join(const std::vector<int>& v, char sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(v[i]);
  }
  return s;
}

synthworld::Dataset load_data(const RunConfig& c) {
  const fs::path dir = resolve_data_dir(c);
  if (!fs::exists(dir / "manifest.json")) throw Error(Errc::kIo, "no dataset at " + dir.string());
  return synthworld::load_dataset(dir);
}

denoiser::Dims dims_for(const synthworld::Dataset& d, int horizon) {
  return {d.world.spec.num_tasks, d.world.spec.num_actions, d.world.spec.obs_dim, horizon};
}

void check_dims(const denoiser::Dims& have, const denoiser::Dims& want) {
  if (have.horizon != want.horizon)
    throw Error(Errc::kShapeMismatch, "checkpoint horizon " + std::to_string(have.horizon) +
                                          " differs from the requested horizon " + std::to_string(want.horizon));
  if (have.num_tasks != want.num_tasks || have.num_actions != want.num_actions || have.obs_dim != want.obs_dim)
    throw Error(Errc::kShapeMismatch, "checkpoint dimensions differ from the dataset's");
}

json checkpoint_meta(const RunConfig& c) { return {{"run_config", to_json(c)}}; }

std::unique_ptr<classifier::TaskClassifier> train_classifier_stage(const RunConfig& c,
                                                                   const synthworld::Dataset& data,
                                                                   const fs::path& out) {
  const auto train = data.instances(c.horizon, true);
  const auto test = data.instances(c.horizon, false);
  Rng init = Rng::derive(c.classifier_train.seed, 7);
  auto cls = std::make_unique<classifier::TaskClassifier>(c.model.classifier, data.world.spec.obs_dim,
                                                          data.world.spec.num_tasks, init);
  const auto report = classifier::train_classifier(*cls, train, test, c.classifier_train);
  std::ostringstream curve;
  curve << "epoch\tloss\theldout_accuracy\n";
  for (std::size_t e = 0; e < report.epoch_loss.size(); ++e)
    curve << e + 1 << '\t' << report.epoch_loss[e] << '\t' << report.heldout_accuracy[e] << '\n';
  write_text(out / "classifier_curve.tsv", curve.str());
  const double acc = report.heldout_accuracy.empty() ? classifier::accuracy(*cls, test)
                                                     : report.heldout_accuracy.back();
  std::fprintf(stderr, "classifier: %zu train / %zu held-out instances, held-out accuracy %.4f\n", train.size(),
               test.size(), acc);
  return cls;
}

void write_diffusion_curve(const pipeline::DiffusionTrainer& t, const fs::path& out) {
  std::ostringstream curve;
  curve << "step\tloss\tlr\n";
  for (const auto& r : t.history()) curve << r.step << '\t' << r.loss << '\t' << r.lr << '\n';
  write_text(out / "diffusion_curve.tsv", curve.str());
}

void train_diffusion_stage(const RunConfig& c, const synthworld::Dataset& data, pipeline::DiffusionTrainer& trainer,
                           const classifier::TaskClassifier* cls, const fs::path& out) {
  const auto train = data.instances(c.horizon, true);
  // A resumed run continues up to the step budget of the current config.
  const int target = c.train.total_steps;
  const int remaining = target - trainer.steps_done();
  const auto t0 = std::chrono::steady_clock::now();
  double window = 0;
  int in_window = 0;
  trainer.run(train, std::max(remaining, 0), [&](const pipeline::StepRecord& r) {
    window += r.loss;
    ++in_window;
    if (r.step % c.log_every == 0) {
      std::fprintf(stderr, "diffusion step %d loss %.4f lr %.2e (%.0fs)\n", r.step, window / in_window, r.lr,
                   seconds_since(t0));
      window = 0;
      in_window = 0;
    }
    if (c.checkpoint_every > 0 && r.step % c.checkpoint_every == 0 && r.step < target) {
      pipeline::save_checkpoint(out / "checkpoint", cls, &trainer, checkpoint_meta(c));
      write_diffusion_curve(trainer, out);
    }
  });
  write_diffusion_curve(trainer, out);
}

json report_json(const std::string& label, const metrics::PlanEvalReport& r, const EvalOptions& e, double seconds) {
  return {{"label", label},
          {"metrics", metrics::to_json(r)},
          {"mask_mode", pipeline::to_string(e.mask_mode)},
          {"ddim_steps", e.ddim_steps},
          {"sampling_seconds", seconds}};
}

metrics::PlanEvalReport metrics_from_json(const json& j) {
  metrics::PlanEvalReport r;
  r.sr = j.at("sr").get<double>();
  r.macc = j.at("macc").get<double>();
  r.miou = j.at("miou").get<double>();
  r.n_instances = j.value("n_instances", 0);
  return r;
}

struct EvalRun {
  metrics::PlanEvalReport report;
  pipeline::PlanSamples plans;
  double seconds = 0;
};

EvalRun evaluate(const pipeline::DiffusionTrainer& trainer, const classifier::TaskClassifier* cls,
                 const std::vector<synthworld::PlanningInstance>& test, const EvalOptions& e, std::uint64_t seed,
                 int samples) {
  pipeline::SampleOptions opt;
  opt.mask_mode = e.mask_mode;
  opt.ddim_steps = e.ddim_steps;
  opt.num_samples = samples;
  opt.seed = seed;
  opt.use_classifier = e.use_classifier;
  opt.chunk = e.chunk;
  const auto t0 = std::chrono::steady_clock::now();
  EvalRun run;
  run.plans = pipeline::sample_plans(trainer.model(), trainer.schedule(), cls, trainer.scopes(), test, opt);
  run.seconds = seconds_since(t0);
  std::vector<metrics::Plan> pred, gt;
  for (std::size_t i = 0; i < test.size(); ++i) {
    pred.push_back(run.plans[i][0]);
    gt.push_back(test[i].actions);
  }
  run.report = metrics::evaluate_plans(pred, gt);
  return run;
}

void write_plans(const fs::path& path, const std::vector<synthworld::PlanningInstance>& test,
                 const pipeline::PlanSamples& plans) {
  std::ostringstream s;
  s << "instance\thorizon\ttask\tgt\tpred\n";
  for (std::size_t i = 0; i < test.size(); ++i)
    s << i << '\t' << test[i].horizon << '\t' << test[i].task_id << '\t' << join(test[i].actions, ',') << '\t'
      << join(plans[i][0], ',') << '\n';
  write_text(path, s.str());
}

void write_samples(const fs::path& path, const std::vector<synthworld::PlanningInstance>& test,
                   const pipeline::PlanSamples& plans) {
  std::ostringstream s;
  s << "instance\tsample\tplan\n";
  for (std::size_t i = 0; i < test.size(); ++i)
    for (std::size_t k = 0; k < plans[i].size(); ++k) s << i << '\t' << k << '\t' << join(plans[i][k], ',') << '\n';
  write_text(path, s.str());
}

struct Loaded {
  synthworld::Dataset data;
  pipeline::Checkpoint ck;
};

Loaded load_trained(const RunConfig& c) {
  Loaded l{load_data(c), {}};
  if (c.checkpoint.empty()) throw Error(Errc::kInvalidArgument, "eval needs --checkpoint");
  l.ck = pipeline::load_checkpoint(c.checkpoint);
  if (!l.ck.diffusion) throw Error(Errc::kIo, "checkpoint has no diffusion model");
  if (c.eval.use_classifier && !l.ck.classifier) throw Error(Errc::kIo, "checkpoint has no task classifier");
  check_dims(l.ck.diffusion->model().dims(), dims_for(l.data, c.horizon));
  return l;
}

}  // namespace

void write_run_config(const RunConfig& c, const fs::path& dir) { write_json(dir / "run_config.json", to_json(c)); }

fs::path resolve_data_dir(const RunConfig& c) {
  if (!c.data_dir.empty()) return c.data_dir;
  if (const char* env = std::getenv("MTID_DATA_DIR"); env && *env) return env;
  throw Error(Errc::kInvalidArgument, "no dataset given: pass --data or set MTID_DATA_DIR");
}

std::int64_t goal_group_key(const synthworld::PlanningInstance& it, int num_actions) {
  const std::int64_t A = num_actions;
  return (static_cast<std::int64_t>(it.task_id) * (A + 1) + (it.prev_action + 1)) * A + it.actions.back();
}

void cmd_gen_data(const RunConfig& c) {
  c.validate();
  synthworld::Dataset d;
  d.world = synthworld::generate_world(c.world);
  d.split = synthworld::split_dataset(d.world, c.train_fraction, c.seed);
  synthworld::save_dataset(d, c.out);
  write_run_config(c, c.out);
  std::printf("dataset %s: %d tasks, %d actions, obs dim %d, %zu traces (%zu train / %zu test)\n", c.out.c_str(),
              c.world.num_tasks, c.world.num_actions, c.world.obs_dim, d.world.traces.size(),
              d.split.train_traces.size(), d.split.test_traces.size());
  for (int T = 3; T <= 6; ++T)
    std::printf("  horizon %d: %zu train / %zu test instances\n", T, d.instances(T, true).size(),
                d.instances(T, false).size());
}

void cmd_train(const RunConfig& c, Stage stage) {
  c.validate();
  const auto data = load_data(c);
  const fs::path out = c.out;
  const auto dims = dims_for(data, c.horizon);
  pipeline::Checkpoint prior;
  if (!c.checkpoint.empty()) prior = pipeline::load_checkpoint(c.checkpoint);
  std::unique_ptr<classifier::TaskClassifier> cls = std::move(prior.classifier);
  if (cls && (cls->obs_dim() != dims.obs_dim || cls->num_tasks() != dims.num_tasks))
    throw Error(Errc::kShapeMismatch, "checkpoint classifier does not match the dataset");

  if (stage == Stage::kClassifier || stage == Stage::kAll) cls = train_classifier_stage(c, data, out);
  std::unique_ptr<pipeline::DiffusionTrainer> trainer;
  if (stage == Stage::kDiffusion || stage == Stage::kAll) {
    if (prior.diffusion) {
      check_dims(prior.diffusion->model().dims(), dims);
      trainer = std::move(prior.diffusion);
      std::fprintf(stderr, "resuming diffusion training at step %d\n", trainer->steps_done());
    } else {
      trainer = std::make_unique<pipeline::DiffusionTrainer>(c.model, c.train, dims, pipeline::scope_table(data.world));
    }
    train_diffusion_stage(c, data, *trainer, cls.get(), out);
  } else if (prior.diffusion) {
    trainer = std::move(prior.diffusion);
  }
  pipeline::save_checkpoint(out / "checkpoint", cls.get(), trainer.get(), checkpoint_meta(c));
  write_run_config(c, out);
}

json cmd_eval(const RunConfig& c) {
  c.validate();
  Loaded l = load_trained(c);
  const auto test = l.data.instances(c.horizon, false);
  const auto& trainer = *l.ck.diffusion;
  const auto* cls = l.ck.classifier.get();
  const fs::path out = c.out;
  const std::uint64_t seed = Rng::derive(c.seed, 51).next();

  const EvalRun main = evaluate(trainer, cls, test, c.eval, seed, 1);
  json report = report_json("eval", main.report, c.eval, main.seconds);
  write_plans(out / "plans.tsv", test, main.plans);

  if (c.eval.mask_mode != pipeline::MaskMode::kInit) {
    EvalOptions base = c.eval;
    base.mask_mode = pipeline::MaskMode::kInit;
    const EvalRun b = evaluate(trainer, cls, test, base, seed, 1);
    report["comparisons"].push_back({{"baseline", report_json("mask-init", b.report, base, b.seconds)},
                                     {"sr_delta", main.report.sr - b.report.sr}});
  }
  if (c.eval.ddim_steps != 10) {
    EvalOptions base = c.eval;
    base.ddim_steps = 10;
    const EvalRun b = evaluate(trainer, cls, test, base, seed, 1);
    report["comparisons"].push_back({{"baseline", report_json("ddim-10", b.report, base, b.seconds)},
                                     {"sr_delta", main.report.sr - b.report.sr},
                                     {"speedup_of_baseline", main.seconds / std::max(b.seconds, 1e-9)}});
  }
  if (c.eval.uncertainty > 0) {
    const EvalRun u = evaluate(trainer, cls, test, c.eval, seed ^ 0x5bd1e995u, c.eval.uncertainty);
    std::vector<std::vector<metrics::Plan>> samples(u.plans.begin(), u.plans.end());
    std::vector<metrics::Plan> gt;
    std::vector<std::int64_t> keys;
    for (const auto& it : test) {
      gt.push_back(it.actions);
      keys.push_back(goal_group_key(it, l.data.world.spec.num_actions));
    }
    report["uncertainty"] = metrics::to_json(metrics::uncertainty_metrics(samples, gt, keys));
    write_samples(out / "samples.tsv", test, u.plans);
  }
  report["run_config"] = to_json(c);
  write_json(out / "report.json", report);
  write_run_config(c, out);
  std::printf("SR %.4f  mAcc %.4f  mIoU %.4f  (%d instances, %.2fs sampling)\n", main.report.sr, main.report.macc,
              main.report.miou, main.report.n_instances, main.seconds);
  return report;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string o;
  for (char ch : s) {
    if (ch == '&') o += "&amp;";
    else if (ch == '<') o += "&lt;";
    else if (ch == '>') o += "&gt;";
    else if (ch == '"') o += "&quot;";
    else o += ch;
  }
  return o;
}

const char* kPalette[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1"};

}  // namespace

std::string render_metric_bars(const std::vector<std::pair<std::string, metrics::PlanEvalReport>>& reports) {
  if (reports.empty()) throw Error(Errc::kEmptyInput, "no reports to plot");
  const double group_w = 3 * 24 + 30, left = 60, top = 30, height = 240;
  const double width = left + group_w * reports.size() + 140;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width) << "\" height=\"" << fmt(top + height + 90)
    << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double y = top + height - height * tick / 4.0;
    s << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(y) << "\" x2=\"" << fmt(width - 140) << "\" y2=\"" << fmt(y)
      << "\" stroke=\"#ddd\"/>\n";
    s << "<text x=\"" << fmt(left - 6) << "\" y=\"" << fmt(y + 4) << "\" font-size=\"11\" text-anchor=\"end\">"
      << fmt(tick / 4.0) << "</text>\n";
  }
  const char* metric_names[] = {"SR", "mAcc", "mIoU"};
  for (std::size_t g = 0; g < reports.size(); ++g) {
    const auto& r = reports[g].second;
    const double vals[] = {r.sr, r.macc, r.miou};
    const double x0 = left + 15 + g * group_w;
    for (int m = 0; m < 3; ++m) {
      const double h = height * std::clamp(vals[m], 0.0, 1.0);
      s << "<rect x=\"" << fmt(x0 + m * 24) << "\" y=\"" << fmt(top + height - h) << "\" width=\"20\" height=\""
        << fmt(h) << "\" fill=\"" << kPalette[m] << "\"/>\n";
    }
    s << "<text x=\"" << fmt(x0 + 36) << "\" y=\"" << fmt(top + height + 16)
      << "\" font-size=\"11\" text-anchor=\"middle\">" << escape(reports[g].first) << "</text>\n";
  }
  for (int m = 0; m < 3; ++m) {
    const double y = top + 10 + m * 18;
    s << "<rect x=\"" << fmt(width - 120) << "\" y=\"" << fmt(y - 10) << "\" width=\"12\" height=\"12\" fill=\""
      << kPalette[m] << "\"/>\n";
    s << "<text x=\"" << fmt(width - 102) << "\" y=\"" << fmt(y) << "\" font-size=\"12\">" << metric_names[m]
      << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::string render_curves(const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& curves) {
  if (curves.empty()) throw Error(Errc::kEmptyInput, "no curves to plot");
  double xmax = 1, ymin = 0, ymax = 0;
  bool first = true;
  for (const auto& [_, pts] : curves)
    for (const auto& [x, y] : pts) {
      if (!std::isfinite(y)) continue;
      xmax = std::max(xmax, x);
      if (first || y < ymin) ymin = y;
      if (first || y > ymax) ymax = y;
      first = false;
    }
  if (ymax <= ymin) ymax = ymin + 1;
  const double left = 60, top = 20, w = 480, h = 240;
  auto px = [&](double x) { return left + w * x / xmax; };
  auto py = [&](double y) { return top + h - h * (y - ymin) / (ymax - ymin); };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(left + w + 160) << "\" height=\""
    << fmt(top + h + 40) << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(top + h) << "\" x2=\"" << fmt(left + w) << "\" y2=\""
    << fmt(top + h) << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(top) << "\" x2=\"" << fmt(left) << "\" y2=\"" << fmt(top + h)
    << "\" stroke=\"black\"/>\n";
  s << "<text x=\"" << fmt(left - 6) << "\" y=\"" << fmt(top + 4) << "\" font-size=\"11\" text-anchor=\"end\">"
    << fmt(ymax) << "</text>\n";
  s << "<text x=\"" << fmt(left - 6) << "\" y=\"" << fmt(top + h) << "\" font-size=\"11\" text-anchor=\"end\">"
    << fmt(ymin) << "</text>\n";
  s << "<text x=\"" << fmt(left + w) << "\" y=\"" << fmt(top + h + 16) << "\" font-size=\"11\" text-anchor=\"end\">"
    << fmt(xmax) << "</text>\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const char* color = kPalette[i % std::size(kPalette)];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    bool sep = false;
    for (const auto& [x, y] : curves[i].second) {
      if (!std::isfinite(y)) continue;
      s << (sep ? " " : "") << fmt(px(x)) << ',' << fmt(py(y));
      sep = true;
    }
    s << "\"/>\n";
    s << "<text x=\"" << fmt(left + w + 10) << "\" y=\"" << fmt(top + 12 + 16 * i) << "\" font-size=\"12\" fill=\""
      << color << "\">" << escape(curves[i].first) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

namespace {

std::vector<std::pair<double, double>> read_curve(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIo, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::kMalformedFile, path.string() + ": empty curve file");
  std::vector<std::pair<double, double>> pts;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    double x, y;
    if (!(row >> x >> y)) throw Error(Errc::kMalformedFile, path.string() + ": bad row '" + line + "'");
    pts.emplace_back(x, y);
  }
  return pts;
}

void collect_reports(const json& j, const std::string& fallback,
                     std::vector<std::pair<std::string, metrics::PlanEvalReport>>& out) {
  try {
    if (j.contains("cells")) {
      for (const auto& cell : j.at("cells")) collect_reports(cell, fallback, out);
      return;
    }
    out.emplace_back(j.value("label", fallback), metrics_from_json(j.at("metrics")));
  } catch (const json::exception& ex) {
    throw Error(Errc::kMalformedFile, "report " + fallback + ": " + ex.what());
  }
}

}  // namespace

void cmd_plot(const std::vector<fs::path>& inputs, const fs::path& out) {
  if (inputs.empty()) throw Error(Errc::kInvalidArgument, "plot needs at least one report or curve file");
  std::vector<std::pair<std::string, metrics::PlanEvalReport>> reports;
  std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> curves;
  for (const auto& p : inputs) {
    if (p.extension() == ".tsv") {
      curves.emplace_back(p.parent_path().filename().string() + "/" + p.stem().string(), read_curve(p));
    } else {
      collect_reports(read_json(p), p.parent_path().filename().string(), reports);
    }
  }
  if (!reports.empty()) write_text(out / "metrics.svg", render_metric_bars(reports));
  if (!curves.empty()) write_text(out / "curves.svg", render_curves(curves));
}

json cmd_sweep(const RunConfig& c) {
  c.validate();
  const auto data = load_data(c);
  const fs::path out = c.out;
  const auto dims = dims_for(data, c.horizon);
  const auto test = data.instances(c.horizon, false);
  std::unique_ptr<classifier::TaskClassifier> cls;
  if (!c.checkpoint.empty()) cls = std::move(pipeline::load_checkpoint(c.checkpoint).classifier);
  if (!cls && c.eval.use_classifier) cls = train_classifier_stage(c, data, out);

  json summary = {{"cells", json::array()}};
  std::map<std::string, std::pair<metrics::PlanEvalReport, int>> means;
  for (auto seed : c.sweep.seeds)
    for (auto loss : c.sweep.losses)
      for (auto mask_loss : c.sweep.mask_losses)
        for (auto strategy : c.sweep.strategies)
          for (auto comp : c.sweep.components) {
            RunConfig cell = c;
            cell.train.seed = seed;
            cell.train.loss = loss;
            cell.train.mask_loss = mask_loss;
            cell.model.interp.strategy = strategy;
            apply_components(comp, cell.model.interp);
            const std::string base_name = objective::to_string(loss) + "_" + objective::to_string(mask_loss) + "_" +
                                          interpolation::to_string(strategy) + "_" + to_string(comp);
            const fs::path model_dir = out / "models" / (base_name + "_seed" + std::to_string(seed));
            std::fprintf(stderr, "sweep: training %s\n", model_dir.filename().c_str());
            pipeline::DiffusionTrainer trainer(cell.model, cell.train, dims, pipeline::scope_table(data.world));
            RunConfig quiet = cell;
            quiet.checkpoint_every = 0;
            train_diffusion_stage(quiet, data, trainer, cls.get(), model_dir);
            cell.out = model_dir.string();
            write_run_config(cell, model_dir);
            for (auto mode : c.sweep.mask_modes) {
              EvalOptions e = cell.eval;
              e.mask_mode = mode;
              const EvalRun r = evaluate(trainer, cls.get(), test, e, Rng::derive(seed, 51).next(), 1);
              const std::string name = base_name + "_" + pipeline::to_string(mode);
              const fs::path cell_dir = out / "cells" / (name + "_seed" + std::to_string(seed));
              RunConfig echoed = cell;
              echoed.eval = e;
              echoed.out = cell_dir.string();
              json rep = report_json(name, r.report, e, r.seconds);
              rep["seed"] = seed;
              rep["run_config"] = to_json(echoed);
              write_json(cell_dir / "report.json", rep);
              write_run_config(echoed, cell_dir);
              write_plans(cell_dir / "plans.tsv", test, r.plans);
              rep.erase("run_config");
              summary["cells"].push_back(rep);
              auto& [acc, n] = means[name];
              acc.sr += r.report.sr;
              acc.macc += r.report.macc;
              acc.miou += r.report.miou;
              acc.n_instances = r.report.n_instances;
              ++n;
              std::printf("%-60s seed %llu  SR %.4f  mAcc %.4f  mIoU %.4f\n", name.c_str(),
                          static_cast<unsigned long long>(seed), r.report.sr, r.report.macc, r.report.miou);
            }
          }
  json avg = json::array();
  for (auto& [name, v] : means) {
    auto r = v.first;
    r.sr /= v.second;
    r.macc /= v.second;
    r.miou /= v.second;
    avg.push_back({{"label", name}, {"metrics", metrics::to_json(r)}, {"seeds", v.second}});
  }
  summary["means"] = avg;
  write_json(out / "summary.json", summary);
  write_json(out / "summary_means.json", json{{"cells", avg}});
  write_run_config(c, out);
  return summary;
}

int run(int argc, char** argv) {
  CLI::App app{"Masked temporal interpolation diffusion for procedure planning on synthetic worlds"};
  app.require_subcommand(1);

  std::string config_path, data_dir, checkpoint, out, stage = "all", mask_mode, loss, mask_loss;
  std::optional<std::uint64_t> seed;
  std::optional<int> horizon, ddim_steps, uncertainty;
  std::vector<std::string> plot_inputs;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration (partial; merged over defaults)");
    sub->add_option("--seed", seed, "Run seed");
    sub->add_option("--horizon", horizon, "Planning horizon")->check(CLI::IsMember({3, 4, 5, 6}));
    sub->add_option("--out", out, "Output directory");
  };
  auto with_data = [&](CLI::App* sub) {
    sub->add_option("--data", data_dir, "Dataset directory (falls back to $MTID_DATA_DIR)");
    sub->add_option("--checkpoint", checkpoint, "Checkpoint directory");
  };
  auto with_train = [&](CLI::App* sub) {
    sub->add_option("--loss", loss, "Loss weighting")->check(CLI::IsMember({"mse", "both-sides", "gradient"}));
    sub->add_option("--mask-loss", mask_loss, "Task-mask convention")
        ->check(CLI::IsMember({"off", "relevant-penalty", "literal"}));
  };
  auto with_eval = [&](CLI::App* sub) {
    sub->add_option("--mask-mode", mask_mode, "Where the task mask is applied during sampling")
        ->check(CLI::IsMember({"init", "iteration", "none"}));
    sub->add_option("--ddim-steps", ddim_steps, "DDIM sampling steps");
    sub->add_option("--uncertainty", uncertainty, "Samples per instance for uncertainty metrics");
  };

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  common(gen);
  auto* train = app.add_subcommand("train", "Train the task classifier and/or the diffusion model");
  common(train);
  with_data(train);
  with_train(train);
  with_eval(train);
  train->add_option("--stage", stage, "Training stage")->check(CLI::IsMember({"classifier", "diffusion", "all"}));
  auto* train_cls = app.add_subcommand("train-classifier", "Alias for train --stage classifier");
  common(train_cls);
  with_data(train_cls);
  auto* eval = app.add_subcommand("eval", "Sample plans on the test split and report metrics");
  common(eval);
  with_data(eval);
  with_eval(eval);
  auto* plot = app.add_subcommand("plot", "Render SVG charts from reports (.json) and curves (.tsv)");
  plot->add_option("inputs", plot_inputs, "Report or curve files");
  plot->add_option("--out", out, "Output directory");
  auto* sweep = app.add_subcommand("sweep", "Train and evaluate every cell of the configured ablation matrix");
  common(sweep);
  with_data(sweep);
  with_train(sweep);
  with_eval(sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (plot->parsed()) {
      if (plot_inputs.empty()) throw Error(Errc::kInvalidArgument, "plot needs at least one report or curve file");
      std::vector<fs::path> inputs(plot_inputs.begin(), plot_inputs.end());
      cmd_plot(inputs, out.empty() ? fs::path(".") : fs::path(out));
      return kOk;
    }
    RunConfig c = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (seed) c.set_seed(*seed);
    if (horizon) c.horizon = *horizon;
    if (!out.empty()) c.out = out;
    if (!data_dir.empty()) c.data_dir = data_dir;
    if (!checkpoint.empty()) c.checkpoint = checkpoint;
    if (!loss.empty()) c.train.loss = objective::parse_loss_kind(loss);
    if (!mask_loss.empty()) c.train.mask_loss = objective::parse_mask_convention(mask_loss);
    if (!mask_mode.empty()) c.eval.mask_mode = pipeline::parse_mask_mode(mask_mode);
    if (ddim_steps) c.eval.ddim_steps = c.train.ddim_steps = *ddim_steps;
    if (uncertainty) c.eval.uncertainty = *uncertainty;

    if (gen->parsed()) cmd_gen_data(c);
    else if (train->parsed()) cmd_train(c, parse_stage(stage));
    else if (train_cls->parsed()) cmd_train(c, Stage::kClassifier);
    else if (eval->parsed()) cmd_eval(c);
    else if (sweep->parsed()) cmd_sweep(c);
    return kOk;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kDataError;
  }
}

}  // namespace mtid::cli
