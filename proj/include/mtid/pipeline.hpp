#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include "json.hpp"
#include "mtid/classifier.hpp"
#include "mtid/denoiser.hpp"
#include "mtid/diffusion.hpp"
#include "mtid/interpolation.hpp"
#include "mtid/objective.hpp"
#include "mtid/synthworld.hpp"

namespace mtid::pipeline {

using nn::Tensor;
using nn::Var;

enum class MaskMode { kInit, kIteration, kNone };
MaskMode parse_mask_mode(const std::string& s);
std::string to_string(MaskMode m);

struct TrainConfig {
  int total_steps = 5000;
  int warmup_steps = 1000;
  double peak_lr = 3e-4;
  std::vector<int> milestones;  // halve the rate at each
  int batch_size = 64;
  std::uint64_t seed = 0;
  int diffusion_steps = 50;
  double cosine_offset = 0.008;
  objective::LossKind loss = objective::LossKind::kGradient;
  objective::MaskConvention mask_loss = objective::MaskConvention::kPenalizeIrrelevant;
  double w0 = 10.0;
  double rho = 2.0;
  /// Restrict training noise to the task's action columns.
  bool mask_training_noise = false;
  int ddim_steps = 10;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Linear warm-up from 0 to the peak, then halved at every milestone passed.
double lr_schedule(int step, const TrainConfig& config);

struct ModelConfig {
  UNetConfig unet;
  interpolation::InterpolationConfig interp;
  classifier::ClassifierConfig classifier;
  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Interpolation module feeding a U-Net; predicts the clean iteration matrix.
class DiffusionModel {
 public:
  DiffusionModel(const ModelConfig& config, const denoiser::Dims& dims, Rng& rng);
  DiffusionModel(const DiffusionModel&) = delete;
  DiffusionModel& operator=(const DiffusionModel&) = delete;

  /// x: [batch * T, C+A+O]; start, goal: [batch, O].
  Var predict(const Tensor& x, const std::vector<int>& steps, const Tensor& start, const Tensor& goal) const;
  Var latent_features(const Tensor& start, const Tensor& goal) const;
  /// Same as predict with precomputed latent features (undefined when routing is none).
  Var predict_with_features(const Tensor& x, const std::vector<int>& steps, const Var& features) const;

  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  const denoiser::Dims& dims() const { return dims_; }
  const ModelConfig& config() const { return config_; }
  interpolation::InterpolationModule& interpolator() { return interp_; }

 private:
  ModelConfig config_;
  denoiser::Dims dims_;
  nn::ParamStore store_;
  interpolation::InterpolationModule interp_;
  denoiser::UNet unet_;
};

using ScopeTable = std::vector<objective::ScopeRow>;

/// One-hot T x A block of a plan.
Tensor encode_actions(const std::vector<int>& actions, int num_actions);
/// Row-wise argmax over all actions; ties go to the lowest id.
std::vector<int> decode_actions(const Tensor& block);

struct StepRecord {
  int step = 0;
  double loss = 0;
  double lr = 0;
};

class DiffusionTrainer {
 public:
  DiffusionTrainer(const ModelConfig& model, const TrainConfig& train, const denoiser::Dims& dims, ScopeTable scopes);

  /// One optimisation step on a batch drawn with replacement from `data`.
  /// Throws kNonFiniteLoss when the loss is not finite.
  double step(const std::vector<synthworld::PlanningInstance>& data);
  void run(const std::vector<synthworld::PlanningInstance>& data, int steps,
           const std::function<void(const StepRecord&)>& on_step = {});

  /// Loss of a fixed batch at fixed diffusion steps and noise, without updating.
  double evaluate_loss(const std::vector<synthworld::PlanningInstance>& batch, std::uint64_t noise_seed);

  DiffusionModel& model() { return *model_; }
  const DiffusionModel& model() const { return *model_; }
  const diffusion::NoiseSchedule& schedule() const { return schedule_; }
  const TrainConfig& train_config() const { return train_; }
  const ScopeTable& scopes() const { return scopes_; }
  int steps_done() const { return steps_done_; }
  const std::vector<StepRecord>& history() const { return history_; }

  // Checkpoint plumbing.
  nn::Adam& optimizer() { return adam_; }
  Rng& rng() { return rng_; }
  void restore_progress(int steps_done, std::vector<StepRecord> history);

 private:
  Var batch_loss(const std::vector<const synthworld::PlanningInstance*>& batch, const std::vector<int>& steps,
                 Rng& noise_rng);

  TrainConfig train_;
  denoiser::Dims dims_;
  ScopeTable scopes_;
  diffusion::NoiseSchedule schedule_;
  std::unique_ptr<DiffusionModel> model_;
  nn::Adam adam_;
  Rng rng_;
  int steps_done_ = 0;
  std::vector<StepRecord> history_;
};

struct SampleOptions {
  MaskMode mask_mode = MaskMode::kInit;
  int ddim_steps = 10;
  int num_samples = 1;
  std::uint64_t seed = 0;
  /// Condition on the classifier's task; otherwise on the ground truth.
  bool use_classifier = true;
  int chunk = 256;  // iteration matrices per forward pass
  /// Called after every reverse step with (diffusion step reached, batch state).
  std::function<void(int, const Tensor&)> observer;
};

/// Plans indexed [instance][sample].
using PlanSamples = std::vector<std::vector<std::vector<int>>>;

PlanSamples sample_plans(const DiffusionModel& model, const diffusion::NoiseSchedule& schedule,
                         const classifier::TaskClassifier* classifier, const ScopeTable& scopes,
                         const std::vector<synthworld::PlanningInstance>& items, const SampleOptions& options);

ScopeTable scope_table(const synthworld::World& world);

// Checkpoint container: either stage may be absent.
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::unique_ptr<classifier::TaskClassifier> classifier;
  std::unique_ptr<DiffusionTrainer> diffusion;
  nlohmann::json meta = nlohmann::json::object();  // free-form provenance
};

void save_checkpoint(const std::filesystem::path& dir, const classifier::TaskClassifier* classifier,
                     DiffusionTrainer* diffusion, const nlohmann::json& meta);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace mtid::pipeline
