#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "json.hpp"

namespace mtid::metrics {

using Plan = std::vector<int>;

double success_rate(const std::vector<Plan>& pred, const std::vector<Plan>& gt);
double mean_accuracy(const std::vector<Plan>& pred, const std::vector<Plan>& gt);
/// Set IoU per plan, averaged over plans.
double mean_iou(const std::vector<Plan>& pred, const std::vector<Plan>& gt);
/// IoU of the summed intersections over the summed unions; kept for comparison.
double pooled_iou(const std::vector<Plan>& pred, const std::vector<Plan>& gt);

struct PlanEvalReport {
  double sr = 0;
  double macc = 0;
  double miou = 0;
  int n_instances = 0;
  std::map<int, PlanEvalReport> per_horizon;
};

PlanEvalReport evaluate_plans(const std::vector<Plan>& pred, const std::vector<Plan>& gt);
nlohmann::json to_json(const PlanEvalReport& r);

struct UncertaintyReport {
  double kl_div = 0;
  double nll = 0;
  double mode_prec = 0;
  double mode_rec = 0;
  int samples_per_instance = 0;
  int groups = 0;
};

nlohmann::json to_json(const UncertaintyReport& r);

/// KL(q || p) over the support of q. Both are probability maps over plans.
double kl_divergence(const std::map<Plan, double>& q, const std::map<Plan, double>& p);

/// samples[i] holds the K sampled plans of instance i; instances sharing a
/// group key form one goal group whose ground-truth plans define the modes.
UncertaintyReport uncertainty_metrics(const std::vector<std::vector<Plan>>& samples, const std::vector<Plan>& gt,
                                      const std::vector<std::int64_t>& group_keys);

}  // namespace mtid::metrics
