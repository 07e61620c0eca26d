#pragma once

#include <span>
#include <vector>

#include "json.hpp"
#include "mtid/nn/layers.hpp"
#include "mtid/synthworld.hpp"

namespace mtid::classifier {

using nn::Tensor;
using nn::Var;

struct ClassifierConfig {
  int embed_dim = 64;
  int layers = 4;
  int heads = 4;
  int ff_dim = 128;
  double dropout = 0.1;
  std::vector<int> head_widths = {64};
  bool operator==(const ClassifierConfig&) const = default;
};

nlohmann::json to_json(const ClassifierConfig& c);
ClassifierConfig classifier_config_from_json(const nlohmann::json& j);

/// Transformer over the two-token sequence (V_s, V_g), mean-pooled, then an
/// MLP head producing task logits.
class TaskClassifier {
 public:
  TaskClassifier(const ClassifierConfig& config, int obs_dim, int num_tasks, Rng& rng);
  TaskClassifier(TaskClassifier&&) = default;
  TaskClassifier& operator=(TaskClassifier&&) = default;
  TaskClassifier(const TaskClassifier&) = delete;
  TaskClassifier& operator=(const TaskClassifier&) = delete;

  /// start, goal: [batch, O]. `train_rng` enables dropout.
  Var logits(const Tensor& start, const Tensor& goal, Rng* train_rng = nullptr) const;

  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  const ClassifierConfig& config() const { return config_; }
  int obs_dim() const { return obs_dim_; }
  int num_tasks() const { return num_tasks_; }

 private:
  ClassifierConfig config_;
  int obs_dim_;
  int num_tasks_;
  nn::ParamStore store_;
  nn::Linear embed_;
  Var position_;
  std::vector<nn::TransformerEncoderLayer> layers_;
  std::vector<nn::Linear> head_;
};

struct Prediction {
  int task = 0;
  std::vector<Scalar> logits;
};

Prediction classify(const TaskClassifier& model, const std::vector<Scalar>& start, const std::vector<Scalar>& goal);
std::vector<int> classify_batch(const TaskClassifier& model, const std::vector<synthworld::PlanningInstance>& items);

/// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const Scalar> v);

struct TrainOptions {
  int epochs = 20;
  int batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

struct TrainReport {
  std::vector<double> epoch_loss;          // mean training loss per epoch
  std::vector<double> heldout_accuracy;    // per epoch
  double initial_loss = 0;                 // on the training set before any update
};

/// Stacks observations of the given instances into [n, O] tensors.
void stack_observations(const std::vector<synthworld::PlanningInstance>& items, Tensor& start, Tensor& goal);

TrainReport train_classifier(TaskClassifier& model, const std::vector<synthworld::PlanningInstance>& train,
                             const std::vector<synthworld::PlanningInstance>& heldout, const TrainOptions& options);

double accuracy(const TaskClassifier& model, const std::vector<synthworld::PlanningInstance>& items);

}  // namespace mtid::classifier
