#include "mtid/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mtid/archive.hpp"
#include "mtid/error.hpp"
#include "mtid/rng.hpp"

namespace mtid::synthworld {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw Error(Errc::kInvalidArgument, what);
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) std::swap(v[i], v[rng.uniform_int(0, i)]);
}

}  // namespace

int WorldSpec::shared_actions() const {
  return static_cast<int>(std::lround(shared_action_fraction * actions_per_task));
}

void WorldSpec::validate() const {
  require(num_tasks >= 1, "num_tasks must be >= 1");
  require(num_actions >= 1, "num_actions must be >= 1");
  require(obs_dim >= 1, "obs_dim must be >= 1");
  require(actions_per_task >= 1, "actions_per_task must be >= 1");
  require(plans_per_task >= 1, "plans_per_task must be >= 1");
  require(min_plan_length >= 3, "plan length minimum must be >= 3");
  require(max_plan_length >= min_plan_length, "plan length range is empty");
  require(std::isfinite(obs_noise_sigma) && obs_noise_sigma >= 0, "obs_noise_sigma must be >= 0");
  require(shared_action_fraction >= 0 && shared_action_fraction <= 1, "shared_action_fraction must be in [0,1]");
  require(skip_probability >= 0 && skip_probability <= 1, "skip_probability must be in [0,1]");
  require(state_decay >= 0 && state_decay < 1, "state_decay must be in [0,1)");
  if (actions_per_task > num_actions) {
    throw Error(Errc::kInfeasibleWorld, "actions_per_task exceeds num_actions");
  }
  const long shared = shared_actions();
  const long needed = static_cast<long>(num_tasks) * (actions_per_task - shared) + shared;
  if (needed > num_actions) {
    throw Error(Errc::kInfeasibleWorld, "scopes need " + std::to_string(needed) + " distinct actions, vocabulary has " +
                                            std::to_string(num_actions));
  }
}

nlohmann::json to_json(const WorldSpec& s) {
  return {{"num_tasks", s.num_tasks},
          {"num_actions", s.num_actions},
          {"obs_dim", s.obs_dim},
          {"actions_per_task", s.actions_per_task},
          {"plans_per_task", s.plans_per_task},
          {"plan_length_range", {s.min_plan_length, s.max_plan_length}},
          {"obs_noise_sigma", s.obs_noise_sigma},
          {"shared_action_fraction", s.shared_action_fraction},
          {"skip_probability", s.skip_probability},
          {"state_decay", s.state_decay},
          {"seed", s.seed}};
}

WorldSpec world_spec_from_json(const nlohmann::json& j) {
  WorldSpec s;
  try {
    s.num_tasks = j.value("num_tasks", s.num_tasks);
    s.num_actions = j.value("num_actions", s.num_actions);
    s.obs_dim = j.value("obs_dim", s.obs_dim);
    s.actions_per_task = j.value("actions_per_task", s.actions_per_task);
    s.plans_per_task = j.value("plans_per_task", s.plans_per_task);
    if (j.contains("plan_length_range")) {
      const auto& r = j.at("plan_length_range");
      s.min_plan_length = r.at(0).get<int>();
      s.max_plan_length = r.at(1).get<int>();
    }
    s.obs_noise_sigma = j.value("obs_noise_sigma", s.obs_noise_sigma);
    s.shared_action_fraction = j.value("shared_action_fraction", s.shared_action_fraction);
    s.skip_probability = j.value("skip_probability", s.skip_probability);
    s.state_decay = j.value("state_decay", s.state_decay);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kInvalidArgument, std::string("world spec: ") + e.what());
  }
  return s;
}

bool World::in_scope(int task, int action) const {
  if (task < 0 || task >= static_cast<int>(scopes.size())) return false;
  const auto& s = scopes[task];
  return std::find(s.begin(), s.end(), action) != s.end();
}

std::vector<std::vector<bool>> World::scope_table() const {
  std::vector<std::vector<bool>> table(scopes.size(), std::vector<bool>(spec.num_actions, false));
  for (std::size_t c = 0; c < scopes.size(); ++c)
    for (int a : scopes[c]) table[c][a] = true;
  return table;
}

World generate_world(const WorldSpec& spec) {
  spec.validate();
  World world;
  world.spec = spec;
  const int O = spec.obs_dim;

  // Scopes: a shared pool common to all tasks plus exclusive actions per task,
  // all drawn from one permutation of the vocabulary.
  Rng scope_rng = Rng::derive(spec.seed, 1);
  std::vector<int> vocab(spec.num_actions);
  std::iota(vocab.begin(), vocab.end(), 0);
  shuffle(vocab, scope_rng);
  const int shared = spec.shared_actions();
  const int own = spec.actions_per_task - shared;
  for (int c = 0; c < spec.num_tasks; ++c) {
    std::vector<int> scope(vocab.begin(), vocab.begin() + shared);
    scope.insert(scope.end(), vocab.begin() + shared + c * own, vocab.begin() + shared + (c + 1) * own);
    shuffle(scope, scope_rng);  // canonical order
    world.scopes.push_back(std::move(scope));
  }

  // Latent geometry: one effect vector per action, one base state per task.
  Rng geo_rng = Rng::derive(spec.seed, 2);
  const double scale = 1.0 / std::sqrt(static_cast<double>(O));
  std::vector<double> effect(static_cast<std::size_t>(spec.num_actions) * O);
  for (auto& v : effect) v = geo_rng.normal() * 2.0 * scale;
  std::vector<double> base(static_cast<std::size_t>(spec.num_tasks) * O);
  for (auto& v : base) v = geo_rng.normal() * 2.0 * scale;

  int trace_id = 0;
  for (int c = 0; c < spec.num_tasks; ++c) {
    const auto& scope = world.scopes[c];
    const int n = static_cast<int>(scope.size());
    for (int p = 0; p < spec.plans_per_task; ++p, ++trace_id) {
      Rng rng = Rng::derive(spec.seed, 3, static_cast<std::uint64_t>(trace_id));
      VideoTrace tr;
      tr.trace_id = trace_id;
      tr.task_id = c;
      const int len = rng.uniform_int(spec.min_plan_length, spec.max_plan_length);
      int pos = rng.uniform_int(0, n - 1);
      for (int k = 0; k < len; ++k) {
        tr.actions.push_back(scope[pos]);
        pos = (pos + (rng.uniform() < spec.skip_probability ? 2 : 1)) % n;
      }
      tr.state_embeddings.resize(static_cast<std::size_t>(len + 1) * O);
      std::vector<double> state(base.begin() + static_cast<std::ptrdiff_t>(c) * O,
                                base.begin() + static_cast<std::ptrdiff_t>(c + 1) * O);
      for (int d = 0; d < O; ++d) tr.state_embeddings[d] = static_cast<float>(state[d]);
      for (int k = 0; k < len; ++k) {
        const double* e = &effect[static_cast<std::size_t>(tr.actions[k]) * O];
        for (int d = 0; d < O; ++d) state[d] = spec.state_decay * state[d] + e[d];
        bool moved = false;
        for (int d = 0; d < O; ++d) {
          float v = static_cast<float>(state[d]);
          moved |= v != tr.state_embeddings[static_cast<std::size_t>(k) * O + d];
          tr.state_embeddings[static_cast<std::size_t>(k + 1) * O + d] = v;
        }
        if (!moved) throw Error(Errc::kInfeasibleWorld, "degenerate action effect produced a repeated state");
      }
      world.traces.push_back(std::move(tr));
    }
  }
  return world;
}

std::vector<PlanningInstance> window_instances(const VideoTrace& trace, int horizon, int obs_dim,
                                               double obs_noise_sigma, std::uint64_t seed) {
  if (horizon < 1) throw Error(Errc::kInvalidArgument, "horizon must be positive");
  const int num = trace.length();
  if (num < horizon) {
    throw Error(Errc::kTraceTooShort, "trace " + std::to_string(trace.trace_id) + " has " + std::to_string(num) +
                                          " actions, horizon " + std::to_string(horizon));
  }
  if (trace.state_embeddings.size() != static_cast<std::size_t>(num + 1) * obs_dim) {
    throw Error(Errc::kShapeMismatch, "state embeddings do not match trace length");
  }
  std::vector<PlanningInstance> out;
  out.reserve(num - horizon + 1);
  for (int t = 0; t + horizon <= num; ++t) {
    Rng rng = Rng::derive(seed, 4, (static_cast<std::uint64_t>(trace.trace_id) << 20) | static_cast<std::uint64_t>(t),
                          static_cast<std::uint64_t>(horizon));
    PlanningInstance inst;
    inst.task_id = trace.task_id;
    inst.horizon = horizon;
    inst.trace_id = trace.trace_id;
    inst.window = t;
    inst.prev_action = t > 0 ? trace.actions[t - 1] : -1;
    inst.actions.assign(trace.actions.begin() + t, trace.actions.begin() + t + horizon);
    inst.start_obs.resize(obs_dim);
    inst.goal_obs.resize(obs_dim);
    const float* s = &trace.state_embeddings[static_cast<std::size_t>(t) * obs_dim];
    const float* g = &trace.state_embeddings[static_cast<std::size_t>(t + horizon) * obs_dim];
    for (int d = 0; d < obs_dim; ++d) inst.start_obs[d] = s[d] + (obs_noise_sigma > 0 ? obs_noise_sigma * rng.normal() : 0.0);
    for (int d = 0; d < obs_dim; ++d) inst.goal_obs[d] = g[d] + (obs_noise_sigma > 0 ? obs_noise_sigma * rng.normal() : 0.0);
    out.push_back(std::move(inst));
  }
  return out;
}

Split split_dataset(const World& world, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(Errc::kUnsplittableTask, "train fraction must leave both splits non-empty");
  }
  Split split;
  split.train_fraction = train_fraction;
  std::vector<std::vector<int>> by_task(world.spec.num_tasks);
  for (const auto& tr : world.traces) by_task.at(tr.task_id).push_back(tr.trace_id);
  Rng rng = Rng::derive(seed, 5);
  for (std::size_t c = 0; c < by_task.size(); ++c) {
    auto& ids = by_task[c];
    const int n = static_cast<int>(ids.size());
    const int n_train = static_cast<int>(std::floor(train_fraction * n + 1e-9));
    if (n < 2 || n_train == 0 || n_train == n) {
      throw Error(Errc::kUnsplittableTask, "task " + std::to_string(c) + " has " + std::to_string(n) + " traces");
    }
    shuffle(ids, rng);
    split.train_traces.insert(split.train_traces.end(), ids.begin(), ids.begin() + n_train);
    split.test_traces.insert(split.test_traces.end(), ids.begin() + n_train, ids.end());
  }
  std::sort(split.train_traces.begin(), split.train_traces.end());
  std::sort(split.test_traces.begin(), split.test_traces.end());
  return split;
}

std::vector<PlanningInstance> Dataset::instances(int horizon, bool train) const {
  std::vector<PlanningInstance> out;
  for (int id : train ? split.train_traces : split.test_traces) {
    const auto& tr = world.traces.at(id);
    if (tr.length() < horizon) continue;
    auto w = window_instances(tr, horizon, world.spec.obs_dim, world.spec.obs_noise_sigma, world.spec.seed);
    std::move(w.begin(), w.end(), std::back_inserter(out));
  }
  return out;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  archive::Writer w(dir, "mtid-dataset", kDatasetVersion);
  const auto& world = ds.world;
  const int O = world.spec.obs_dim;
  std::vector<std::int32_t> task_ids, lengths, actions;
  std::vector<float> states;
  for (const auto& tr : world.traces) {
    task_ids.push_back(tr.task_id);
    lengths.push_back(tr.length());
    actions.insert(actions.end(), tr.actions.begin(), tr.actions.end());
    states.insert(states.end(), tr.state_embeddings.begin(), tr.state_embeddings.end());
  }
  const auto n_traces = static_cast<std::int64_t>(world.traces.size());
  w.put("trace_task", std::span<const std::int32_t>(task_ids), {n_traces});
  w.put("trace_length", std::span<const std::int32_t>(lengths), {n_traces});
  w.put("actions", std::span<const std::int32_t>(actions), {static_cast<std::int64_t>(actions.size())});
  w.put("state_embeddings", std::span<const float>(states), {static_cast<std::int64_t>(states.size()) / O, O});
  std::vector<std::int32_t> scopes;
  for (const auto& s : world.scopes) scopes.insert(scopes.end(), s.begin(), s.end());
  w.put("scopes", std::span<const std::int32_t>(scopes),
        {world.spec.num_tasks, static_cast<std::int64_t>(world.scopes.empty() ? 0 : world.scopes[0].size())});
  std::vector<std::int32_t> tr(ds.split.train_traces.begin(), ds.split.train_traces.end());
  std::vector<std::int32_t> te(ds.split.test_traces.begin(), ds.split.test_traces.end());
  w.put("train_traces", std::span<const std::int32_t>(tr), {static_cast<std::int64_t>(tr.size())});
  w.put("test_traces", std::span<const std::int32_t>(te), {static_cast<std::int64_t>(te.size())});
  w.meta()["world_spec"] = to_json(world.spec);
  w.meta()["split"] = {{"train_fraction", ds.split.train_fraction},
                       {"train_traces", tr.size()},
                       {"test_traces", te.size()},
                       {"level", "trace"}};
  w.finish();
}

Dataset load_dataset(const std::filesystem::path& dir) {
  archive::Reader r(dir, "mtid-dataset", kDatasetVersion);
  Dataset ds;
  try {
    ds.world.spec = world_spec_from_json(r.meta().at("world_spec"));
    ds.split.train_fraction = r.meta().at("split").at("train_fraction").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kMalformedFile, std::string("dataset manifest: ") + e.what());
  }
  const int O = ds.world.spec.obs_dim;
  const auto task_ids = r.get_i32("trace_task");
  const auto lengths = r.get_i32("trace_length");
  const auto actions = r.get_i32("actions");
  const auto states = r.get_f32("state_embeddings");
  const auto scopes = r.get_i32("scopes");
  if (task_ids.size() != lengths.size()) throw Error(Errc::kMalformedFile, "trace arrays disagree");
  std::size_t a_off = 0, s_off = 0;
  for (std::size_t i = 0; i < task_ids.size(); ++i) {
    VideoTrace tr;
    tr.trace_id = static_cast<int>(i);
    tr.task_id = task_ids[i];
    const std::size_t len = static_cast<std::size_t>(lengths[i]);
    const std::size_t n_state = (len + 1) * O;
    if (a_off + len > actions.size() || s_off + n_state > states.size()) {
      throw Error(Errc::kMalformedFile, "trace payload shorter than declared lengths");
    }
    tr.actions.assign(actions.begin() + a_off, actions.begin() + a_off + len);
    tr.state_embeddings.assign(states.begin() + s_off, states.begin() + s_off + n_state);
    a_off += len;
    s_off += n_state;
    ds.world.traces.push_back(std::move(tr));
  }
  const auto scope_shape = r.shape("scopes");
  const auto per = static_cast<std::size_t>(scope_shape.at(1));
  for (std::int64_t c = 0; c < scope_shape.at(0); ++c) {
    ds.world.scopes.emplace_back(scopes.begin() + c * per, scopes.begin() + (c + 1) * per);
  }
  const auto tr = r.get_i32("train_traces");
  const auto te = r.get_i32("test_traces");
  ds.split.train_traces.assign(tr.begin(), tr.end());
  ds.split.test_traces.assign(te.begin(), te.end());
  return ds;
}

}  // namespace mtid::synthworld
