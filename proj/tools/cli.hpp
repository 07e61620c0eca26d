#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtid/error.hpp"
#include "mtid/interpolation.hpp"
#include "mtid/metrics.hpp"
#include "mtid/pipeline.hpp"
#include "mtid/synthworld.hpp"

namespace mtid::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kDataError = 3, kNumericError = 4 };

int exit_code(Errc code);

struct EvalOptions {
  pipeline::MaskMode mask_mode = pipeline::MaskMode::kInit;
  int ddim_steps = 10;
  int uncertainty = 0;  // K samples per instance; 0 disables
  bool use_classifier = true;
  int chunk = 256;
};

/// Interpolation component toggles swept as one axis.
enum class Components { kFull, kBare, kNoEncoder, kNoRefiner };
Components parse_components(const std::string& s);
std::string to_string(Components c);
void apply_components(Components c, interpolation::InterpolationConfig& interp);

struct SweepOptions {
  std::vector<objective::LossKind> losses = {objective::LossKind::kMse, objective::LossKind::kBothSides,
                                             objective::LossKind::kGradient};
  std::vector<objective::MaskConvention> mask_losses = {objective::MaskConvention::kPenalizeIrrelevant};
  std::vector<pipeline::MaskMode> mask_modes = {pipeline::MaskMode::kInit, pipeline::MaskMode::kIteration};
  std::vector<interpolation::Strategy> strategies = {interpolation::Strategy::kLearned};
  std::vector<Components> components = {Components::kFull};
  std::vector<std::uint64_t> seeds = {0};
};

/// Everything that determines a run; echoed next to every artifact.
struct RunConfig {
  std::uint64_t seed = 0;
  int horizon = 3;
  synthworld::WorldSpec world;
  double train_fraction = 0.7;
  pipeline::ModelConfig model;
  pipeline::TrainConfig train;
  classifier::TrainOptions classifier_train;
  EvalOptions eval;
  SweepOptions sweep;
  std::string data_dir;
  std::string checkpoint;
  std::string out = "mtid_run";
  int checkpoint_every = 500;
  int log_every = 100;

  /// Propagates the run seed to world generation, training and sampling.
  void set_seed(std::uint64_t s);
  void validate() const;
};

nlohmann::json to_json(const RunConfig& c);
/// Applies `patch` on top of the serialized defaults; unknown keys are errors.
RunConfig run_config_from_json(const nlohmann::json& patch);
RunConfig load_run_config(const std::filesystem::path& path);
void write_run_config(const RunConfig& c, const std::filesystem::path& dir);

/// Dataset directory from the config, else $MTID_DATA_DIR.
std::filesystem::path resolve_data_dir(const RunConfig& c);

/// Grouping key for uncertainty metrics: instances sharing task, the action
/// before the window and the final action share a goal group.
std::int64_t goal_group_key(const synthworld::PlanningInstance& it, int num_actions);

// Subcommands. Each writes its artifacts plus run_config.json into c.out.
void cmd_gen_data(const RunConfig& c);
enum class Stage { kClassifier, kDiffusion, kAll };
Stage parse_stage(const std::string& s);
void cmd_train(const RunConfig& c, Stage stage);
nlohmann::json cmd_eval(const RunConfig& c);
void cmd_plot(const std::vector<std::filesystem::path>& inputs, const std::filesystem::path& out);
nlohmann::json cmd_sweep(const RunConfig& c);

/// SVG renderers; deterministic for fixed inputs.
std::string render_metric_bars(const std::vector<std::pair<std::string, metrics::PlanEvalReport>>& reports);
std::string render_curves(const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& curves);

/// Full command-line entry; returns the process exit code.
int run(int argc, char** argv);

}  // namespace mtid::cli
