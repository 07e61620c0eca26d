#include "mtid/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mtid/error.hpp"

namespace mtid::classifier {

nlohmann::json to_json(const ClassifierConfig& c) {
  return {{"embed_dim", c.embed_dim}, {"layers", c.layers},   {"heads", c.heads},
          {"ff_dim", c.ff_dim},       {"dropout", c.dropout}, {"head_widths", c.head_widths}};
}

ClassifierConfig classifier_config_from_json(const nlohmann::json& j) {
  ClassifierConfig c;
  try {
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.ff_dim = j.value("ff_dim", c.ff_dim);
    c.dropout = j.value("dropout", c.dropout);
    if (j.contains("head_widths")) c.head_widths = j.at("head_widths").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kInvalidArgument, std::string("classifier config: ") + e.what());
  }
  return c;
}

TaskClassifier::TaskClassifier(const ClassifierConfig& config, int obs_dim, int num_tasks, Rng& rng)
    : config_(config), obs_dim_(obs_dim), num_tasks_(num_tasks) {
  if (num_tasks < 1 || obs_dim < 1) throw Error(Errc::kInvalidArgument, "classifier needs tasks and observations");
  if (config.heads < 1 || config.embed_dim % config.heads != 0) {
    throw Error(Errc::kInvalidArgument, "classifier heads must divide the embedding width");
  }
  if (config.dropout < 0 || config.dropout >= 1) throw Error(Errc::kInvalidArgument, "dropout must be in [0,1)");
  embed_ = nn::Linear(store_, "cls.embed", obs_dim, config.embed_dim, rng);
  Tensor pos(2, config.embed_dim);
  for (auto& v : pos.vec()) v = 0.02 * rng.normal();
  position_ = store_.add("cls.position", std::move(pos));
  for (int l = 0; l < config.layers; ++l) {
    layers_.emplace_back(store_, "cls.layer" + std::to_string(l), config.embed_dim, config.heads, config.ff_dim,
                         config.dropout, rng);
  }
  int in = config.embed_dim;
  for (std::size_t i = 0; i < config.head_widths.size(); ++i) {
    head_.emplace_back(store_, "cls.head" + std::to_string(i), in, config.head_widths[i], rng);
    in = config.head_widths[i];
  }
  head_.emplace_back(store_, "cls.out", in, num_tasks, rng);
}

Var TaskClassifier::logits(const Tensor& start, const Tensor& goal, Rng* train_rng) const {
  if (start.cols() != obs_dim_ || !start.same_shape(goal)) {
    throw Error(Errc::kShapeMismatch, "classifier expects [batch, " + std::to_string(obs_dim_) + "] observations");
  }
  const int batch = start.rows();
  Tensor tokens(2 * batch, obs_dim_);
  Tensor select(2 * batch, 2);
  for (int b = 0; b < batch; ++b) {
    std::copy(start.row(b).begin(), start.row(b).end(), tokens.row(2 * b).begin());
    std::copy(goal.row(b).begin(), goal.row(b).end(), tokens.row(2 * b + 1).begin());
    select(2 * b, 0) = 1;
    select(2 * b + 1, 1) = 1;
  }
  Var h = nn::add(embed_(nn::constant(std::move(tokens))), nn::matmul(nn::constant(std::move(select)), position_));
  for (const auto& layer : layers_) h = layer(h, 2, train_rng);
  h = nn::mean_rows(h, 2);
  for (std::size_t i = 0; i + 1 < head_.size(); ++i) h = nn::relu(head_[i](h));
  return head_.back()(h);
}

int argmax(std::span<const Scalar> v) {
  if (v.empty()) throw Error(Errc::kEmptyInput, "argmax of empty row");
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

Prediction classify(const TaskClassifier& model, const std::vector<Scalar>& start, const std::vector<Scalar>& goal) {
  if (static_cast<int>(start.size()) != model.obs_dim() || start.size() != goal.size()) {
    throw Error(Errc::kShapeMismatch, "observation width");
  }
  nn::NoGradGuard guard;
  Var out = model.logits(Tensor(1, model.obs_dim(), start), Tensor(1, model.obs_dim(), goal));
  Prediction p;
  p.logits = out.value().vec();
  p.task = argmax(p.logits);
  return p;
}

void stack_observations(const std::vector<synthworld::PlanningInstance>& items, Tensor& start, Tensor& goal) {
  if (items.empty()) throw Error(Errc::kEmptyInput, "no instances");
  const int O = static_cast<int>(items.front().start_obs.size());
  start = Tensor(static_cast<int>(items.size()), O);
  goal = Tensor(static_cast<int>(items.size()), O);
  for (std::size_t i = 0; i < items.size(); ++i) {
    std::copy(items[i].start_obs.begin(), items[i].start_obs.end(), start.row(static_cast<int>(i)).begin());
    std::copy(items[i].goal_obs.begin(), items[i].goal_obs.end(), goal.row(static_cast<int>(i)).begin());
  }
}

std::vector<int> classify_batch(const TaskClassifier& model, const std::vector<synthworld::PlanningInstance>& items) {
  if (items.empty()) return {};
  nn::NoGradGuard guard;
  Tensor s, g;
  stack_observations(items, s, g);
  Var out = model.logits(s, g);
  std::vector<int> pred(items.size());
  for (int i = 0; i < out.rows(); ++i) pred[i] = argmax(out.value().row(i));
  return pred;
}

double accuracy(const TaskClassifier& model, const std::vector<synthworld::PlanningInstance>& items) {
  if (items.empty()) throw Error(Errc::kEmptyInput, "no instances to score");
  const auto pred = classify_batch(model, items);
  int hit = 0;
  for (std::size_t i = 0; i < items.size(); ++i) hit += pred[i] == items[i].task_id;
  return static_cast<double>(hit) / static_cast<double>(items.size());
}

namespace {

double dataset_loss(const TaskClassifier& model, const std::vector<synthworld::PlanningInstance>& items) {
  nn::NoGradGuard guard;
  Tensor s, g;
  stack_observations(items, s, g);
  std::vector<int> labels;
  for (const auto& it : items) labels.push_back(it.task_id);
  return nn::cross_entropy(model.logits(s, g), labels).item();
}

}  // namespace

TrainReport train_classifier(TaskClassifier& model, const std::vector<synthworld::PlanningInstance>& train,
                             const std::vector<synthworld::PlanningInstance>& heldout, const TrainOptions& options) {
  if (train.empty()) throw Error(Errc::kEmptyInput, "classifier training set is empty");
  if (options.epochs < 0 || options.batch_size < 1 || !(options.learning_rate > 0)) {
    throw Error(Errc::kInvalidArgument, "classifier training options");
  }
  TrainReport report;
  report.initial_loss = dataset_loss(model, train);
  nn::Adam adam(model.params());
  Rng rng = Rng::derive(options.seed, 11);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(0, static_cast<int>(i) - 1)]);
    double total = 0;
    for (std::size_t off = 0; off < order.size(); off += options.batch_size) {
      const std::size_t end = std::min(order.size(), off + options.batch_size);
      std::vector<synthworld::PlanningInstance> batch;
      std::vector<int> labels;
      for (std::size_t i = off; i < end; ++i) {
        batch.push_back(train[order[i]]);
        labels.push_back(train[order[i]].task_id);
      }
      Tensor s, g;
      stack_observations(batch, s, g);
      model.params().zero_grad();
      Var loss = nn::cross_entropy(model.logits(s, g, &rng), labels);
      if (!std::isfinite(loss.item())) throw Error(Errc::kNonFiniteLoss, "classifier loss diverged");
      loss.backward();
      adam.step(options.learning_rate);
      total += loss.item() * static_cast<double>(end - off);
    }
    report.epoch_loss.push_back(total / static_cast<double>(order.size()));
    report.heldout_accuracy.push_back(heldout.empty() ? 0.0 : accuracy(model, heldout));
  }
  return report;
}

}  // namespace mtid::classifier
