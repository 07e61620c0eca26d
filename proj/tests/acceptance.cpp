// Acceptance run: one PASS/FAIL line per criterion. `--fast` limits the run
// to the checks that need no training.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mtid/classifier.hpp"
#include "mtid/denoiser.hpp"
#include "mtid/diffusion.hpp"
#include "mtid/interpolation.hpp"
#include "mtid/metrics.hpp"
#include "mtid/objective.hpp"
#include "mtid/pipeline.hpp"
#include "mtid/synthworld.hpp"
#include "oracles.hpp"

using namespace mtid;
using nlohmann::json;
using nn::Tensor;
using nn::Var;
using testing::finite_difference;
using testing::random_tensor;
using testing::relative_error;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

json g_report = json::array();
int g_failed = 0;

void record(int id, const std::string& name, const Outcome& o, double seconds) {
  std::printf("%s  %2d  %-34s %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), seconds);
  std::fflush(stdout);
  g_report.push_back({{"id", id}, {"name", name}, {"pass", o.pass}, {"detail", o.detail}, {"seconds", seconds}});
  if (!o.pass) ++g_failed;
}

void run_criterion(int id, const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  record(id, name, o, since(t0));
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---------------------------------------------------------------- 1 and 2

Outcome round_trip() {
  const auto t0 = Clock::now();
  const auto sched = diffusion::cosine_schedule(50);
  Rng rng(2024);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform() * 50);
    const Tensor x0 = random_tensor(3, 62, rng);
    const Tensor eps = random_tensor(3, 62, rng);
    Tensor x = diffusion::forward_diffuse(x0, n, eps, sched);
    // Descend one step at a time with the noise implied by the true x0.
    for (int k = n; k >= 1; --k) {
      const Tensor implied = diffusion::implied_noise(x, x0, k, sched);
      x = diffusion::ddim_jump(x, k, k - 1, implied, sched);
    }
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(x[i] - x0[i]));
  }
  const double secs = since(t0);
  return {worst <= 1e-5 && secs < 10, fmt("max abs error %.3e", worst) + fmt(", %.2fs", secs)};
}

Outcome schedule_invariants() {
  const auto s = diffusion::cosine_schedule(50);
  bool decreasing = true, beta_ok = true;
  double product_err = 0, running = 1;
  for (int n = 1; n <= 50; ++n) {
    decreasing = decreasing && s.alpha_bar(n) < s.alpha_bar(n - 1);
    const double b = s.beta[n - 1];
    beta_ok = beta_ok && b > 0 && b <= 0.999;
    running *= 1 - b;
    product_err = std::max(product_err, std::abs(running - s.alpha_bar(n)));
  }
  const bool pass = decreasing && beta_ok && s.alpha_bar(50) < 1e-2 && product_err <= 1e-12;
  return {pass, fmt("alpha_bar_N %.3e", s.alpha_bar(50)) + fmt(", product error %.1e", product_err) +
                    (decreasing ? "" : ", not decreasing") + (beta_ok ? "" : ", beta out of range")};
}

// ---------------------------------------------------------------- 3

double fd_check(Var& p, const std::function<Var()>& loss) {
  p.zero_grad();
  loss().backward();
  const Tensor analytic = p.grad();
  const Tensor numeric = finite_difference(p, [&] {
    nn::NoGradGuard g;
    return loss().item();
  });
  return relative_error(analytic, numeric);
}

Outcome gradients() {
  double worst_a = 0, worst_b = 0, worst_c_formula = 0, worst_c_fd = 0;
  {
    nn::ParamStore store;
    Rng rng(1);
    interpolation::InterpolationConfig cfg;
    cfg.count = 4;
    cfg.refiner_layers = 2;
    cfg.refiner_heads = 2;
    interpolation::InterpolationModule m(store, cfg, 8, rng);
    m.w().mutable_value() = random_tensor(4, 8, rng);
    m.k().mutable_value() = random_tensor(4, 8, rng, 0.5);
    const Tensor vs = random_tensor(2, 8, rng), vg = random_tensor(2, 8, rng), probe = random_tensor(8, 8, rng);
    auto loss = [&] { return nn::sum(nn::mul(m(nn::constant(vs), nn::constant(vg)), nn::constant(probe))); };
    for (const char* name : {"interp.encoder.conv1.weight", "interp.encoder.conv2.weight", "interp.W", "interp.k",
                             "interp.tau", "interp.refiner.layer0.attn.q.weight", "interp.refiner.layer1.ff2.weight"}) {
      store.zero_grad();
      worst_a = std::max(worst_a, fd_check(*store.find(name), loss));
    }
  }
  {
    nn::ParamStore store;
    Rng rng(2);
    denoiser::ResidualTemporalBlock block(store, "b", 6, 8, 8, 5, 4, true, rng);
    Var x(random_tensor(2 * 3, 6, rng), true), temb(random_tensor(2, 8, rng), true),
        lat(random_tensor(2 * 2, 5, rng), true);
    const Tensor probe = random_tensor(6, 8, rng);
    auto loss = [&] { return nn::sum(nn::mul(block(x, 3, temb, lat, 2), nn::constant(probe))); };
    std::vector<Var*> checks = {&x, &temb, &lat};
    for (const char* name : {"b.conv1.weight", "b.conv2.weight", "b.cross.kv.weight", "b.cross.kv.bias",
                             "b.norm1.gamma", "b.time.weight", "b.residual.weight"})
      checks.push_back(store.find(name));
    for (Var* p : checks) {
      store.zero_grad();
      worst_b = std::max(worst_b, fd_check(*p, loss));
    }
  }
  {
    Rng rng(3);
    const int T = 5, A = 7;
    const auto w = objective::gradient_weights(T, 10);
    objective::ScopeRow scope(A, false);
    scope[1] = scope[4] = true;
    const Tensor mask = objective::task_mask(scope, T, 2.0, objective::MaskConvention::kPenalizeIrrelevant);
    const Tensor weights = objective::loss_weight_matrix(w, {mask});
    Var a(random_tensor(T, A, rng), true);
    const Tensor target = random_tensor(T, A, rng);
    auto loss = [&] { return objective::proximity_loss(a, target, weights); };
    a.zero_grad();
    loss().backward();
    for (int t = 0; t < T; ++t)
      for (int d = 0; d < A; ++d) {
        const double formula = 2 * w.w[t] * mask(t, d) * (a.value()(t, d) - target(t, d));
        worst_c_formula = std::max(worst_c_formula, std::abs(a.grad()(t, d) - formula));
      }
    worst_c_fd = fd_check(a, loss);
  }
  const bool pass = worst_a <= 1e-3 && worst_b <= 1e-3 && worst_c_formula <= 1e-6 && worst_c_fd <= 1e-3;
  return {pass, fmt("interp %.1e", worst_a) + fmt(", block %.1e", worst_b) + fmt(", loss formula %.1e", worst_c_formula) +
                    fmt(", loss fd %.1e", worst_c_fd)};
}

// ---------------------------------------------------------------- 4 to 6

Outcome weight_formula() {
  const std::map<int, std::vector<double>> expected = {{3, {10, 1, 10}}, {4, {10, 1, 1, 10}}, {5, {10, 5.5, 1, 5.5, 10}}};
  bool pass = true;
  for (const auto& [T, want] : expected) {
    const auto got = objective::gradient_weights(T, 10).w;
    // Direct evaluation: w0 + (1 - w0) (min(t, T-t+1) - 1) / (ceil(T/2) - 1).
    std::vector<double> direct;
    for (int t = 1; t <= T; ++t)
      direct.push_back(10.0 + (1.0 - 10.0) * (std::min(t, T - t + 1) - 1) / ((T + 1) / 2 - 1.0));
    pass = pass && got == want && direct == want;
  }
  return {pass, pass ? "T=3,4,5 match" : "mismatch"};
}

Outcome masks() {
  Rng rng(5);
  objective::ScopeRow scope(25, false);
  for (int a : {2, 7, 11, 19, 23}) scope[a] = true;
  long nonzero_inactive = 0;
  for (int draw = 0; draw < 10000; ++draw) {
    const Tensor x = objective::masked_init(scope, 3, rng);
    for (int t = 0; t < 3; ++t)
      for (int a = 0; a < 25; ++a)
        if (!scope[a] && x(t, a) != 0.0) ++nonzero_inactive;
  }
  bool bit_exact = true;
  for (auto kind : {objective::LossKind::kMse, objective::LossKind::kBothSides, objective::LossKind::kGradient}) {
    const auto w = objective::loss_weights(kind, 3, 10);
    const Tensor p = random_tensor(3, 25, rng), g = random_tensor(3, 25, rng);
    const double masked = objective::proximity_loss(
        p, g, w, objective::task_mask(scope, 3, 1.0, objective::MaskConvention::kPenalizeIrrelevant));
    const double literal =
        objective::proximity_loss(p, g, w, objective::task_mask(scope, 3, 1.0, objective::MaskConvention::kLiteral));
    const double plain = objective::proximity_loss(p, g, w, Tensor(3, 25, 1.0));
    bit_exact = bit_exact && masked == plain && literal == plain;
  }
  return {nonzero_inactive == 0 && bit_exact,
          std::to_string(nonzero_inactive) + " nonzero inactive entries over 10^4 draws, rho=1 " +
              (bit_exact ? "bit-exact" : "differs")};
}

// Brute-force metric references written independently of the library.
double ref_sr(const std::vector<metrics::Plan>& p, const std::vector<metrics::Plan>& g) {
  double hits = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    bool same = p[i].size() == g[i].size();
    for (std::size_t t = 0; same && t < p[i].size(); ++t) same = p[i][t] == g[i][t];
    hits += same ? 1 : 0;
  }
  return hits / static_cast<double>(p.size());
}

double ref_macc(const std::vector<metrics::Plan>& p, const std::vector<metrics::Plan>& g) {
  double hits = 0, total = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t t = 0; t < g[i].size(); ++t) {
      hits += p[i][t] == g[i][t] ? 1 : 0;
      total += 1;
    }
  return hits / total;
}

double ref_miou(const std::vector<metrics::Plan>& p, const std::vector<metrics::Plan>& g) {
  double acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::set<int> a(p[i].begin(), p[i].end()), b(g[i].begin(), g[i].end()), u = a;
    u.insert(b.begin(), b.end());
    std::size_t inter = 0;
    for (int x : a) inter += b.count(x);
    acc += static_cast<double>(inter) / static_cast<double>(u.size());
  }
  return acc / static_cast<double>(p.size());
}

Outcome metric_oracles() {
  Rng rng(6);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int T = 3 + static_cast<int>(rng.uniform() * 4);
    const int A = 2 + static_cast<int>(rng.uniform() * 6);
    std::vector<metrics::Plan> p(1), g(1);
    for (int t = 0; t < T; ++t) {
      p[0].push_back(static_cast<int>(rng.uniform() * A));
      g[0].push_back(rng.uniform() < 0.5 ? p[0].back() : static_cast<int>(rng.uniform() * A));
    }
    if (metrics::success_rate(p, g) != ref_sr(p, g) || metrics::mean_accuracy(p, g) != ref_macc(p, g) ||
        metrics::mean_iou(p, g) != ref_miou(p, g))
      ++mismatches;
  }
  // Two instances with different union sizes: per-sequence mean 0.75, pooled 5/7.
  const std::vector<metrics::Plan> pred = {{1, 2, 4}, {5, 6, 7}}, gt = {{1, 2, 3}, {5, 6, 7}};
  const double per_seq = metrics::mean_iou(pred, gt), pooled = metrics::pooled_iou(pred, gt);
  const bool convention = per_seq == 0.75 && std::abs(pooled - 5.0 / 7.0) < 1e-15 && per_seq != pooled;
  return {mismatches == 0 && convention, std::to_string(mismatches) + " mismatches over 1000 pairs" +
                                             fmt(", per-sequence mIoU %.4f", per_seq) + fmt(" vs pooled %.4f", pooled)};
}

// ---------------------------------------------------------------- 7 to 11

struct DeskRun {
  synthworld::Dataset data;
  std::vector<synthworld::PlanningInstance> train, test;
  std::unique_ptr<classifier::TaskClassifier> cls;
  double classifier_accuracy = 0;
  denoiser::Dims dims;
  pipeline::ScopeTable scopes;
};

std::unique_ptr<pipeline::DiffusionTrainer> train_model(const DeskRun& d, objective::LossKind loss,
                                                        objective::MaskConvention mask, bool bare, std::uint64_t seed,
                                                        int steps) {
  pipeline::ModelConfig mc;
  if (bare) {
    mc.interp.use_encoder = false;
    mc.interp.use_refiner = false;
  }
  pipeline::TrainConfig tc;
  tc.total_steps = steps;
  tc.warmup_steps = steps / 5;
  tc.peak_lr = 1e-3;
  tc.seed = seed;
  tc.loss = loss;
  tc.mask_loss = mask;
  auto t = std::make_unique<pipeline::DiffusionTrainer>(mc, tc, d.dims, d.scopes);
  t->run(d.train, steps);
  return t;
}

struct Eval {
  metrics::PlanEvalReport report;
  double seconds = 0;
};

Eval evaluate(const DeskRun& d, const pipeline::DiffusionTrainer& t, pipeline::MaskMode mode, int ddim) {
  pipeline::SampleOptions opt;
  opt.mask_mode = mode;
  opt.ddim_steps = ddim;
  opt.seed = 99;
  const auto t0 = Clock::now();
  const auto plans = pipeline::sample_plans(t.model(), t.schedule(), d.cls.get(), d.scopes, d.test, opt);
  Eval e;
  e.seconds = since(t0);
  std::vector<metrics::Plan> pred, gt;
  for (std::size_t i = 0; i < d.test.size(); ++i) {
    pred.push_back(plans[i][0]);
    gt.push_back(d.test[i].actions);
  }
  e.report = metrics::evaluate_plans(pred, gt);
  return e;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  bool fast = false;
  int steps = 800;
  std::string report_path;
  app.add_flag("--fast", fast, "Run only the checks that need no training");
  app.add_option("--steps", steps, "Diffusion training steps per desk-scale model");
  app.add_option("--report", report_path, "Write a JSON summary here");
  CLI11_PARSE(app, argc, argv);

  run_criterion(1, "diffusion round trip", round_trip);
  run_criterion(2, "schedule invariants", schedule_invariants);
  run_criterion(3, "gradient integrity", gradients);
  run_criterion(4, "weight formula", weight_formula);
  run_criterion(5, "mask correctness", masks);
  run_criterion(6, "metric oracles", metric_oracles);

  if (!fast) {
    const auto t0 = Clock::now();
    DeskRun d;
    std::unique_ptr<pipeline::DiffusionTrainer> main_model;
    Eval init10;
    double pipeline_seconds = 0;
    run_criterion(7, "desk-scale end to end", [&]() -> Outcome {
      synthworld::WorldSpec spec;
      d.data.world = synthworld::generate_world(spec);
      d.data.split = synthworld::split_dataset(d.data.world, 0.7, 0);
      d.train = d.data.instances(3, true);
      d.test = d.data.instances(3, false);
      d.dims = {spec.num_tasks, spec.num_actions, spec.obs_dim, 3};
      d.scopes = pipeline::scope_table(d.data.world);
      Rng init = Rng::derive(0, 7);
      d.cls = std::make_unique<classifier::TaskClassifier>(classifier::ClassifierConfig{}, spec.obs_dim,
                                                           spec.num_tasks, init);
      classifier::TrainOptions co;
      co.epochs = 10;
      classifier::train_classifier(*d.cls, d.train, d.test, co);
      d.classifier_accuracy = classifier::accuracy(*d.cls, d.test);
      main_model = train_model(d, objective::LossKind::kGradient, objective::MaskConvention::kPenalizeIrrelevant,
                               false, 0, steps);
      init10 = evaluate(d, *main_model, pipeline::MaskMode::kInit, 10);
      pipeline_seconds = since(t0);

      Rng rr(7);
      std::vector<metrics::Plan> random_pred, gt;
      for (const auto& it : d.test) {
        metrics::Plan p;
        for (int t = 0; t < 3; ++t) p.push_back(static_cast<int>(rr.uniform() * spec.num_actions));
        random_pred.push_back(p);
        gt.push_back(it.actions);
      }
      const double random_sr = metrics::success_rate(random_pred, gt);
      const auto& r = init10.report;
      const bool pass = d.train.size() >= 2000 && d.classifier_accuracy >= 0.95 && r.sr >= 0.5 && r.macc >= r.sr &&
                        random_sr < 0.01 && pipeline_seconds <= 1800;
      return {pass, std::to_string(d.train.size()) + " train instances" +
                        fmt(", classifier %.4f", d.classifier_accuracy) + fmt(", SR %.4f", r.sr) +
                        fmt(", mAcc %.4f", r.macc) + fmt(", mIoU %.4f", r.miou) + fmt(", random SR %.4f", random_sr) +
                        fmt(", pipeline %.0fs", pipeline_seconds)};
    });

    run_criterion(8, "mask placement ablation", [&]() -> Outcome {
      if (!main_model) return {false, "no trained model"};
      const Eval it = evaluate(d, *main_model, pipeline::MaskMode::kIteration, 10);
      const double gap = init10.report.sr - it.report.sr;
      return {gap >= 0.20, fmt("init SR %.4f", init10.report.sr) + fmt(", iteration SR %.4f", it.report.sr) +
                               fmt(", gap %.4f (need >= 0.20)", gap)};
    });

    std::map<std::string, std::vector<double>> sr;
    sr["gradient+mask"].push_back(init10.report.sr);
    auto add_runs = [&](const std::string& key, objective::LossKind loss, objective::MaskConvention mask, bool bare,
                        std::vector<std::uint64_t> seeds) {
      for (auto s : seeds) {
        auto t = train_model(d, loss, mask, bare, s, steps);
        sr[key].push_back(evaluate(d, *t, pipeline::MaskMode::kInit, 10).report.sr);
      }
    };
    auto mean = [&](const std::string& key) {
      double acc = 0;
      for (double v : sr[key]) acc += v;
      return acc / static_cast<double>(sr[key].size());
    };
    auto list = [&](const std::string& key) {
      std::string s;
      for (double v : sr[key]) s += (s.empty() ? "" : "/") + fmt("%.3f", v);
      return s;
    };

    run_criterion(9, "loss variant ordering", [&]() -> Outcome {
      if (!main_model) return {false, "no trained model"};
      add_runs("gradient+mask", objective::LossKind::kGradient, objective::MaskConvention::kPenalizeIrrelevant, false,
               {1, 2});
      add_runs("gradient", objective::LossKind::kGradient, objective::MaskConvention::kOff, false, {0, 1, 2});
      add_runs("mse", objective::LossKind::kMse, objective::MaskConvention::kOff, false, {0, 1, 2});
      const double gm = mean("gradient+mask"), g = mean("gradient"), m = mean("mse");
      return {gm >= g && g >= m, fmt("mean SR gradient+mask %.4f", gm) + " [" + list("gradient+mask") + "]" +
                                     fmt(", gradient %.4f", g) + " [" + list("gradient") + "]" + fmt(", mse %.4f", m) +
                                     " [" + list("mse") + "]"};
    });

    run_criterion(10, "DDIM acceleration", [&]() -> Outcome {
      if (!main_model) return {false, "no trained model"};
      const Eval full = evaluate(d, *main_model, pipeline::MaskMode::kInit, 50);
      const double speedup = full.seconds / init10.seconds;
      const double diff = std::abs(init10.report.sr - full.report.sr);
      return {diff <= 0.05 && speedup >= 4.0, fmt("SR 10-step %.4f", init10.report.sr) +
                                                   fmt(", 50-step %.4f", full.report.sr) + fmt(", speedup %.2fx", speedup)};
    });

    run_criterion(11, "component toggles", [&]() -> Outcome {
      if (sr["gradient+mask"].size() != 3) return {false, "full-model runs missing"};
      add_runs("bare", objective::LossKind::kGradient, objective::MaskConvention::kPenalizeIrrelevant, true, {0, 1, 2});
      const double full = mean("gradient+mask"), bare = mean("bare");
      return {full > bare, fmt("mean SR full %.4f", full) + " [" + list("gradient+mask") + "]" +
                               fmt(", bare %.4f", bare) + " [" + list("bare") + "]"};
    });
  }

  std::printf("%d criteria failed\n", g_failed);
  if (!report_path.empty()) std::ofstream(report_path) << json{{"criteria", g_report}}.dump(2) << "\n";
  return g_failed == 0 ? 0 : 1;
}
