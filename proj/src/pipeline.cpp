#include "mtid/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "mtid/archive.hpp"
#include "mtid/error.hpp"

namespace mtid::pipeline {

using synthworld::PlanningInstance;

MaskMode parse_mask_mode(const std::string& s) {
  if (s == "init") return MaskMode::kInit;
  if (s == "iteration") return MaskMode::kIteration;
  if (s == "none") return MaskMode::kNone;
  throw Error(Errc::kInvalidArgument, "unknown mask mode '" + s + "'");
}

std::string to_string(MaskMode m) {
  switch (m) {
    case MaskMode::kInit: return "init";
    case MaskMode::kIteration: return "iteration";
    case MaskMode::kNone: return "none";
  }
  return "?";
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(Errc::kInvalidArgument, what); };
  if (total_steps < 1) fail("total_steps must be positive");
  if (warmup_steps < 0 || warmup_steps >= total_steps) fail("warmup_steps must be in [0, total_steps)");
  if (!(peak_lr > 0)) fail("peak learning rate must be positive");
  if (!std::is_sorted(milestones.begin(), milestones.end())) fail("milestones must be ascending");
  if (batch_size < 1) fail("batch_size must be positive");
  if (diffusion_steps < 2) throw Error(Errc::kScheduleTooShort, "diffusion_steps must be >= 2");
  if (ddim_steps < 1 || ddim_steps > diffusion_steps) fail("ddim_steps must be in [1, diffusion_steps]");
  if (!(w0 > 0)) fail("w0 must be positive");
  if (!(rho > 0)) fail("rho must be positive");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"total_steps", c.total_steps},
          {"warmup_steps", c.warmup_steps},
          {"peak_lr", c.peak_lr},
          {"milestones", c.milestones},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"diffusion_steps", c.diffusion_steps},
          {"cosine_offset", c.cosine_offset},
          {"loss", objective::to_string(c.loss)},
          {"mask_loss", objective::to_string(c.mask_loss)},
          {"w0", c.w0},
          {"rho", c.rho},
          {"mask_training_noise", c.mask_training_noise},
          {"ddim_steps", c.ddim_steps}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.total_steps = j.value("total_steps", c.total_steps);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.peak_lr = j.value("peak_lr", c.peak_lr);
    if (j.contains("milestones")) c.milestones = j.at("milestones").get<std::vector<int>>();
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.diffusion_steps = j.value("diffusion_steps", c.diffusion_steps);
    c.cosine_offset = j.value("cosine_offset", c.cosine_offset);
    if (j.contains("loss")) c.loss = objective::parse_loss_kind(j.at("loss").get<std::string>());
    if (j.contains("mask_loss")) c.mask_loss = objective::parse_mask_convention(j.at("mask_loss").get<std::string>());
    c.w0 = j.value("w0", c.w0);
    c.rho = j.value("rho", c.rho);
    c.mask_training_noise = j.value("mask_training_noise", c.mask_training_noise);
    c.ddim_steps = j.value("ddim_steps", c.ddim_steps);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kInvalidArgument, std::string("train config: ") + e.what());
  }
  return c;
}

double lr_schedule(int step, const TrainConfig& c) {
  if (step < 0) throw Error(Errc::kOutOfRange, "negative step");
  if (step < c.warmup_steps) return c.peak_lr * static_cast<double>(step) / c.warmup_steps;
  double lr = c.peak_lr;
  for (int m : c.milestones)
    if (step >= m) lr *= 0.5;
  return lr;
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"unet", to_json(c.unet)},
          {"interpolation", interpolation::to_json(c.interp)},
          {"classifier", classifier::to_json(c.classifier)}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  if (j.contains("unet")) c.unet = unet_config_from_json(j.at("unet"));
  if (j.contains("interpolation")) c.interp = interpolation::interpolation_config_from_json(j.at("interpolation"));
  if (j.contains("classifier")) c.classifier = classifier::classifier_config_from_json(j.at("classifier"));
  return c;
}

namespace {

ModelConfig with_feature_count(ModelConfig c) {
  c.interp.count = interpolation::interpolation_count(c.unet);
  return c;
}

Tensor stack_rows(const std::vector<const std::vector<Scalar>*>& rows, int width) {
  Tensor t(static_cast<int>(rows.size()), width);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<int>(rows[i]->size()) != width) throw Error(Errc::kShapeMismatch, "observation width");
    std::copy(rows[i]->begin(), rows[i]->end(), t.row(static_cast<int>(i)).begin());
  }
  return t;
}

}  // namespace

DiffusionModel::DiffusionModel(const ModelConfig& config, const denoiser::Dims& dims, Rng& rng)
    : config_(with_feature_count(config)),
      dims_(dims),
      interp_(store_, config_.interp, dims.obs_dim, rng),
      unet_(store_, config_.unet, dims.width(), interp_.latent_dim(), rng) {}

Var DiffusionModel::latent_features(const Tensor& start, const Tensor& goal) const {
  return interp_(nn::constant(start), nn::constant(goal));
}

Var DiffusionModel::predict(const Tensor& x, const std::vector<int>& steps, const Tensor& start,
                            const Tensor& goal) const {
  Var features;
  if (config_.unet.routing != FeatureRouting::kNone) features = latent_features(start, goal);
  return unet_(nn::constant(x), dims_.horizon, steps, features);
}

Var DiffusionModel::predict_with_features(const Tensor& x, const std::vector<int>& steps,
                                          const Var& features) const {
  return unet_(nn::constant(x), dims_.horizon, steps, features);
}

Tensor encode_actions(const std::vector<int>& actions, int num_actions) {
  Tensor out(static_cast<int>(actions.size()), num_actions);
  for (std::size_t t = 0; t < actions.size(); ++t) {
    if (actions[t] < 0 || actions[t] >= num_actions) throw Error(Errc::kOutOfRange, "action id");
    out(static_cast<int>(t), actions[t]) = 1.0;
  }
  return out;
}

std::vector<int> decode_actions(const Tensor& block) {
  std::vector<int> out;
  for (int t = 0; t < block.rows(); ++t) out.push_back(classifier::argmax(block.row(t)));
  return out;
}

ScopeTable scope_table(const synthworld::World& world) { return world.scope_table(); }

DiffusionTrainer::DiffusionTrainer(const ModelConfig& model, const TrainConfig& train, const denoiser::Dims& dims,
                                   ScopeTable scopes)
    : train_(train), dims_(dims), scopes_(std::move(scopes)), rng_(Rng::derive(train.seed, 41)) {
  train_.validate();
  if (dims_.horizon < 1) throw Error(Errc::kInvalidArgument, "horizon must be positive");
  if (static_cast<int>(scopes_.size()) != dims_.num_tasks) throw Error(Errc::kShapeMismatch, "scope table rows");
  for (const auto& row : scopes_)
    if (static_cast<int>(row.size()) != dims_.num_actions) throw Error(Errc::kShapeMismatch, "scope table cols");
  // Fail early on horizons the weighting cannot handle.
  objective::loss_weights(train_.loss, dims_.horizon, train_.w0);
  schedule_ = diffusion::cosine_schedule(train_.diffusion_steps, train_.cosine_offset);
  Rng init = Rng::derive(train.seed, 42);
  model_ = std::make_unique<DiffusionModel>(model, dims_, init);
  adam_ = nn::Adam(model_->params());
}

Var DiffusionTrainer::batch_loss(const std::vector<const PlanningInstance*>& batch, const std::vector<int>& steps,
                                 Rng& noise_rng) {
  const int B = static_cast<int>(batch.size());
  const int T = dims_.horizon, A = dims_.num_actions;
  Tensor x(B * T, dims_.width());
  Tensor target(B * T, A);
  std::vector<Tensor> masks;
  std::vector<const std::vector<Scalar>*> starts, goals;
  for (int b = 0; b < B; ++b) {
    const auto& it = *batch[b];
    if (it.horizon != T || static_cast<int>(it.actions.size()) != T) {
      throw Error(Errc::kShapeMismatch, "instance horizon differs from the model's");
    }
    const auto& scope = scopes_.at(it.task_id);
    const Tensor clean = encode_actions(it.actions, A);
    const double ab = schedule_.alpha_bar(steps[b]);
    const double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
    for (int t = 0; t < T; ++t)
      for (int a = 0; a < A; ++a) {
        double eps = noise_rng.normal();
        if (train_.mask_training_noise && !scope[a]) eps = 0;
        x(b * T + t, dims_.action_begin() + a) = sa * clean(t, a) + sn * eps;
        target(b * T + t, a) = clean(t, a);
      }
    denoiser::condition_project(x, b * T, it.task_id, it.start_obs, it.goal_obs, dims_);
    masks.push_back(objective::task_mask(scope, T, train_.rho, train_.mask_loss));
    starts.push_back(&it.start_obs);
    goals.push_back(&it.goal_obs);
  }
  const auto weights = objective::loss_weight_matrix(objective::loss_weights(train_.loss, T, train_.w0), masks);
  Var pred = model_->predict(x, steps, stack_rows(starts, dims_.obs_dim), stack_rows(goals, dims_.obs_dim));
  Var actions = nn::slice_cols(pred, dims_.action_begin(), dims_.action_begin() + A);
  return nn::scale(objective::proximity_loss(actions, target, weights), 1.0 / B);
}

double DiffusionTrainer::step(const std::vector<PlanningInstance>& data) {
  if (data.empty()) throw Error(Errc::kEmptyInput, "diffusion training set is empty");
  std::vector<const PlanningInstance*> batch;
  std::vector<int> steps;
  for (int b = 0; b < train_.batch_size; ++b) {
    batch.push_back(&data[rng_.uniform_int(0, static_cast<int>(data.size()) - 1)]);
    steps.push_back(rng_.uniform_int(1, schedule_.steps));
  }
  model_->params().zero_grad();
  Var loss = batch_loss(batch, steps, rng_);
  const double value = loss.item();
  if (!std::isfinite(value)) {
    throw Error(Errc::kNonFiniteLoss, "diffusion loss is not finite at step " + std::to_string(steps_done_));
  }
  loss.backward();
  const double lr = lr_schedule(steps_done_ + 1, train_);
  adam_.step(lr);
  ++steps_done_;
  history_.push_back({steps_done_, value, lr});
  return value;
}

void DiffusionTrainer::run(const std::vector<PlanningInstance>& data, int steps,
                           const std::function<void(const StepRecord&)>& on_step) {
  for (int i = 0; i < steps; ++i) {
    step(data);
    if (on_step) on_step(history_.back());
  }
}

double DiffusionTrainer::evaluate_loss(const std::vector<PlanningInstance>& batch, std::uint64_t noise_seed) {
  if (batch.empty()) throw Error(Errc::kEmptyInput, "empty evaluation batch");
  nn::NoGradGuard guard;
  Rng noise = Rng::derive(noise_seed, 43);
  std::vector<const PlanningInstance*> ptrs;
  std::vector<int> steps;
  for (const auto& it : batch) {
    ptrs.push_back(&it);
    steps.push_back(noise.uniform_int(1, schedule_.steps));
  }
  return batch_loss(ptrs, steps, noise).item();
}

void DiffusionTrainer::restore_progress(int steps_done, std::vector<StepRecord> history) {
  steps_done_ = steps_done;
  history_ = std::move(history);
}

PlanSamples sample_plans(const DiffusionModel& model, const diffusion::NoiseSchedule& schedule,
                         const classifier::TaskClassifier* cls, const ScopeTable& scopes,
                         const std::vector<PlanningInstance>& items, const SampleOptions& opt) {
  if (opt.num_samples < 1) throw Error(Errc::kInvalidArgument, "num_samples must be >= 1");
  if (opt.chunk < 1) throw Error(Errc::kInvalidArgument, "chunk must be >= 1");
  const auto& dims = model.dims();
  const int T = dims.horizon, A = dims.num_actions;
  const auto visit = diffusion::sampling_steps(schedule.steps, opt.ddim_steps);

  std::vector<int> tasks;
  if (opt.use_classifier) {
    if (!cls) throw Error(Errc::kInvalidArgument, "sampling with predicted tasks needs a classifier");
    tasks = classifier::classify_batch(*cls, items);
  } else {
    for (const auto& it : items) tasks.push_back(it.task_id);
  }

  nn::NoGradGuard guard;
  PlanSamples out(items.size(), std::vector<std::vector<int>>(opt.num_samples));
  const std::size_t jobs = items.size() * static_cast<std::size_t>(opt.num_samples);
  for (std::size_t first = 0; first < jobs; first += opt.chunk) {
    const int J = static_cast<int>(std::min<std::size_t>(opt.chunk, jobs - first));
    Tensor x(J * T, dims.width());
    Tensor start(J, dims.obs_dim), goal(J, dims.obs_dim);
    std::vector<std::size_t> inst(J);
    for (int j = 0; j < J; ++j) {
      const std::size_t job = first + j;
      const std::size_t i = job / opt.num_samples;
      const std::size_t s = job % opt.num_samples;
      inst[j] = i;
      const auto& it = items[i];
      if (it.horizon != T) throw Error(Errc::kShapeMismatch, "instance horizon differs from the model's");
      Rng noise = Rng::derive(opt.seed, 31, i, s);
      const auto& scope = scopes.at(tasks[i]);
      for (int t = 0; t < T; ++t)
        for (int a = 0; a < A; ++a) {
          const double e = noise.normal();
          x(j * T + t, dims.action_begin() + a) = (opt.mask_mode == MaskMode::kNone || scope[a]) ? e : 0.0;
        }
      denoiser::condition_project(x, j * T, tasks[i], it.start_obs, it.goal_obs, dims);
      std::copy(it.start_obs.begin(), it.start_obs.end(), start.row(j).begin());
      std::copy(it.goal_obs.begin(), it.goal_obs.end(), goal.row(j).begin());
    }
    Var features;
    if (model.config().unet.routing != FeatureRouting::kNone) features = model.latent_features(start, goal);
    for (std::size_t k = 0; k < visit.size(); ++k) {
      const int n = visit[k];
      const int m = k + 1 < visit.size() ? visit[k + 1] : 0;
      const std::vector<int> steps(J, n);
      Tensor x0 = model.predict_with_features(x, steps, features).value();
      const Tensor f = diffusion::implied_noise(x, x0, n, schedule);
      x = diffusion::ddim_jump(x, n, m, f, schedule);
      for (int j = 0; j < J; ++j) {
        const auto& it = items[inst[j]];
        denoiser::condition_project(x, j * T, tasks[inst[j]], it.start_obs, it.goal_obs, dims);
        if (opt.mask_mode == MaskMode::kIteration) {
          const auto& scope = scopes.at(tasks[inst[j]]);
          for (int t = 0; t < T; ++t)
            for (int a = 0; a < A; ++a)
              if (!scope[a]) x(j * T + t, dims.action_begin() + a) = 0.0;
        }
      }
      if (opt.observer) opt.observer(m, x);
    }
    for (int j = 0; j < J; ++j) {
      const std::size_t job = first + j;
      out[job / opt.num_samples][job % opt.num_samples] = decode_actions(denoiser::action_block(x, j * T, dims));
    }
  }
  return out;
}

namespace {

void put_store(archive::Writer& w, const std::string& prefix, const nn::ParamStore& store) {
  for (const auto& [name, v] : store) {
    w.put(prefix + name, v.value().span(), {v.rows(), v.cols()});
  }
}

void get_store(const archive::Reader& r, const std::string& prefix, nn::ParamStore& store) {
  for (auto& [name, v] : store) {
    const auto shape = r.shape(prefix + name);
    if (shape.size() != 2 || shape[0] != v.rows() || shape[1] != v.cols()) {
      throw Error(Errc::kMalformedFile, "parameter " + name + " has the wrong shape");
    }
    v.mutable_value() = Tensor(v.rows(), v.cols(), r.get_f64(prefix + name));
  }
}

nlohmann::json dims_json(const denoiser::Dims& d) {
  return {{"num_tasks", d.num_tasks}, {"num_actions", d.num_actions}, {"obs_dim", d.obs_dim}, {"horizon", d.horizon}};
}

denoiser::Dims dims_from_json(const nlohmann::json& j) {
  return {j.at("num_tasks").get<int>(), j.at("num_actions").get<int>(), j.at("obs_dim").get<int>(),
          j.at("horizon").get<int>()};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const classifier::TaskClassifier* cls,
                     DiffusionTrainer* diff, const nlohmann::json& meta) {
  archive::Writer w(dir, "mtid-checkpoint", kCheckpointVersion);
  w.meta()["user"] = meta;
  if (cls) {
    put_store(w, "cls.", cls->params());
    w.meta()["classifier"] = {{"config", classifier::to_json(cls->config())},
                              {"obs_dim", cls->obs_dim()},
                              {"num_tasks", cls->num_tasks()}};
  }
  if (diff) {
    auto& model = diff->model();
    put_store(w, "diff.", model.params());
    auto& adam = diff->optimizer();
    std::size_t i = 0;
    for (const auto& [name, v] : model.params()) {
      w.put("adam_m." + name, adam.first_moments()[i].span(), {v.rows(), v.cols()});
      w.put("adam_v." + name, adam.second_moments()[i].span(), {v.rows(), v.cols()});
      ++i;
    }
    std::vector<double> hist;
    for (const auto& h : diff->history()) {
      hist.push_back(h.step);
      hist.push_back(h.loss);
      hist.push_back(h.lr);
    }
    w.put("history", std::span<const double>(hist), {static_cast<std::int64_t>(diff->history().size()), 3});
    const auto& s = diff->schedule();
    w.put("schedule_beta", std::span<const double>(s.beta), {static_cast<std::int64_t>(s.beta.size())});
    nlohmann::json scopes = nlohmann::json::array();
    for (const auto& row : diff->scopes()) {
      std::vector<int> ids;
      for (std::size_t a = 0; a < row.size(); ++a)
        if (row[a]) ids.push_back(static_cast<int>(a));
      scopes.push_back(ids);
    }
    w.meta()["diffusion"] = {{"model", to_json(model.config())},
                             {"train", to_json(diff->train_config())},
                             {"dims", dims_json(model.dims())},
                             {"scopes", scopes},
                             {"schedule", {{"steps", s.steps}, {"offset", s.offset}}},
                             {"steps_done", diff->steps_done()},
                             {"adam_steps", adam.steps()},
                             {"rng_state", diff->rng().save_state()}};
  }
  w.finish();
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  archive::Reader r(dir, "mtid-checkpoint", kCheckpointVersion);
  Checkpoint ck;
  try {
    const auto& meta = r.meta();
    ck.meta = meta.value("user", nlohmann::json::object());
    if (meta.contains("classifier")) {
      const auto& c = meta.at("classifier");
      Rng rng(0);
      ck.classifier = std::make_unique<classifier::TaskClassifier>(
          classifier::classifier_config_from_json(c.at("config")), c.at("obs_dim").get<int>(),
          c.at("num_tasks").get<int>(), rng);
      get_store(r, "cls.", ck.classifier->params());
    }
    if (meta.contains("diffusion")) {
      const auto& d = meta.at("diffusion");
      const auto dims = dims_from_json(d.at("dims"));
      ScopeTable scopes;
      for (const auto& ids : d.at("scopes")) {
        objective::ScopeRow row(dims.num_actions, false);
        for (int a : ids.get<std::vector<int>>()) row.at(a) = true;
        scopes.push_back(std::move(row));
      }
      ck.diffusion = std::make_unique<DiffusionTrainer>(model_config_from_json(d.at("model")),
                                                        train_config_from_json(d.at("train")), dims, scopes);
      auto& trainer = *ck.diffusion;
      if (trainer.schedule().beta != r.get_f64("schedule_beta")) {
        throw Error(Errc::kMalformedFile, "stored noise schedule differs from its recomputation");
      }
      get_store(r, "diff.", trainer.model().params());
      auto& adam = trainer.optimizer();
      std::size_t i = 0;
      for (const auto& [name, v] : trainer.model().params()) {
        adam.first_moments()[i] = Tensor(v.rows(), v.cols(), r.get_f64("adam_m." + name));
        adam.second_moments()[i] = Tensor(v.rows(), v.cols(), r.get_f64("adam_v." + name));
        ++i;
      }
      adam.set_steps(d.at("adam_steps").get<long>());
      trainer.rng().load_state(d.at("rng_state").get<std::string>());
      const auto hist = r.get_f64("history");
      std::vector<StepRecord> records;
      for (std::size_t k = 0; k + 3 <= hist.size(); k += 3) {
        records.push_back({static_cast<int>(hist[k]), hist[k + 1], hist[k + 2]});
      }
      trainer.restore_progress(d.at("steps_done").get<int>(), std::move(records));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kMalformedFile, std::string("checkpoint manifest: ") + e.what());
  }
  return ck;
}

}  // namespace mtid::pipeline
