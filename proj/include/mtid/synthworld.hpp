#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"
#include "mtid/scalar.hpp"

namespace mtid::synthworld {

struct WorldSpec {
  int num_tasks = 5;         // C
  int num_actions = 25;      // A
  int obs_dim = 32;          // O
  int actions_per_task = 5;
  int plans_per_task = 130;
  int min_plan_length = 5;
  int max_plan_length = 9;
  double obs_noise_sigma = 0.1;
  /// Fraction of each task's scope drawn from a pool shared by all tasks.
  double shared_action_fraction = 0.0;
  /// Probability that a plan skips one step of the task's canonical order.
  double skip_probability = 0.25;
  /// State update s_k = decay * s_{k-1} + E[a_k].
  double state_decay = 0.5;
  std::uint64_t seed = 0;

  /// Throws kInvalidArgument on a malformed spec and kInfeasibleWorld when
  /// the scopes cannot be drawn from the vocabulary.
  void validate() const;
  int shared_actions() const;
  bool operator==(const WorldSpec&) const = default;
};

nlohmann::json to_json(const WorldSpec& spec);
WorldSpec world_spec_from_json(const nlohmann::json& j);

struct VideoTrace {
  int trace_id = 0;
  int task_id = 0;
  std::vector<int> actions;
  /// (actions.size() + 1) x obs_dim, row-major.
  std::vector<float> state_embeddings;

  int length() const { return static_cast<int>(actions.size()); }
  bool operator==(const VideoTrace&) const = default;
};

struct World {
  WorldSpec spec;
  /// scopes[c] lists the action ids of task c in its canonical order.
  std::vector<std::vector<int>> scopes;
  std::vector<VideoTrace> traces;

  bool in_scope(int task, int action) const;
  /// Boolean membership table, num_tasks x num_actions.
  std::vector<std::vector<bool>> scope_table() const;
  bool operator==(const World&) const = default;
};

World generate_world(const WorldSpec& spec);

struct PlanningInstance {
  std::vector<Scalar> start_obs;  // V_s
  std::vector<Scalar> goal_obs;   // V_g
  std::vector<int> actions;
  int task_id = 0;
  int horizon = 0;
  int trace_id = 0;
  int window = 0;
  /// Action preceding the window in its trace, -1 at the start.
  int prev_action = -1;
};

/// Every length-T window of the trace. Observation noise is drawn from a
/// stream keyed by (seed, trace, window, T), so results do not depend on
/// call order.
std::vector<PlanningInstance> window_instances(const VideoTrace& trace, int horizon, int obs_dim,
                                               double obs_noise_sigma, std::uint64_t seed);

struct Split {
  double train_fraction = 0.7;
  std::vector<int> train_traces;
  std::vector<int> test_traces;
  bool operator==(const Split&) const = default;
};

/// Per task, the first floor(fraction * n) traces of a seeded shuffle go to
/// train and the rest to test.
Split split_dataset(const World& world, double train_fraction, std::uint64_t seed);

struct Dataset {
  World world;
  Split split;

  std::vector<PlanningInstance> instances(int horizon, bool train) const;
  bool operator==(const Dataset&) const = default;
};

inline constexpr int kDatasetVersion = 1;

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace mtid::synthworld
