#include "mtid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mtid/error.hpp"

namespace mtid::metrics {

namespace {

void check_aligned(const std::vector<Plan>& pred, const std::vector<Plan>& gt) {
  if (pred.empty() || gt.empty()) throw Error(Errc::kEmptyInput, "no plans to score");
  if (pred.size() != gt.size()) throw Error(Errc::kShapeMismatch, "prediction and ground-truth counts differ");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != gt[i].size()) {
      throw Error(Errc::kShapeMismatch, "plan " + std::to_string(i) + " horizon differs from its ground truth");
    }
  }
}

std::pair<std::size_t, std::size_t> overlap(const Plan& a, const Plan& b) {
  const std::set<int> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::size_t inter = 0;
  for (int x : sa) inter += sb.count(x);
  return {inter, sa.size() + sb.size() - inter};
}

}  // namespace

double success_rate(const std::vector<Plan>& pred, const std::vector<Plan>& gt) {
  check_aligned(pred, gt);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == gt[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double mean_accuracy(const std::vector<Plan>& pred, const std::vector<Plan>& gt) {
  check_aligned(pred, gt);
  std::size_t hit = 0, total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t t = 0; t < pred[i].size(); ++t) hit += pred[i][t] == gt[i][t];
    total += pred[i].size();
  }
  if (total == 0) throw Error(Errc::kEmptyInput, "plans are empty");
  return static_cast<double>(hit) / static_cast<double>(total);
}

double mean_iou(const std::vector<Plan>& pred, const std::vector<Plan>& gt) {
  check_aligned(pred, gt);
  double acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto [inter, uni] = overlap(pred[i], gt[i]);
    acc += uni ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
  }
  return acc / static_cast<double>(pred.size());
}

double pooled_iou(const std::vector<Plan>& pred, const std::vector<Plan>& gt) {
  check_aligned(pred, gt);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto [a, b] = overlap(pred[i], gt[i]);
    inter += a;
    uni += b;
  }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
}

PlanEvalReport evaluate_plans(const std::vector<Plan>& pred, const std::vector<Plan>& gt) {
  PlanEvalReport r;
  r.sr = success_rate(pred, gt);
  r.macc = mean_accuracy(pred, gt);
  r.miou = mean_iou(pred, gt);
  r.n_instances = static_cast<int>(pred.size());
  std::map<int, std::pair<std::vector<Plan>, std::vector<Plan>>> by_h;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto& [p, g] = by_h[static_cast<int>(gt[i].size())];
    p.push_back(pred[i]);
    g.push_back(gt[i]);
  }
  for (const auto& [h, pg] : by_h) {
    PlanEvalReport sub;
    sub.sr = success_rate(pg.first, pg.second);
    sub.macc = mean_accuracy(pg.first, pg.second);
    sub.miou = mean_iou(pg.first, pg.second);
    sub.n_instances = static_cast<int>(pg.first.size());
    r.per_horizon[h] = sub;
  }
  return r;
}

nlohmann::json to_json(const PlanEvalReport& r) {
  nlohmann::json j = {{"sr", r.sr}, {"macc", r.macc}, {"miou", r.miou}, {"n_instances", r.n_instances}};
  if (!r.per_horizon.empty()) {
    nlohmann::json ph = nlohmann::json::object();
    for (const auto& [h, sub] : r.per_horizon) ph[std::to_string(h)] = to_json(sub);
    j["per_horizon"] = ph;
  }
  return j;
}

nlohmann::json to_json(const UncertaintyReport& r) {
  return {{"kl_div", r.kl_div},       {"nll", r.nll},
          {"mode_prec", r.mode_prec}, {"mode_rec", r.mode_rec},
          {"samples_per_instance", r.samples_per_instance}, {"groups", r.groups}};
}

double kl_divergence(const std::map<Plan, double>& q, const std::map<Plan, double>& p) {
  double kl = 0;
  for (const auto& [plan, qv] : q) {
    if (qv <= 0) continue;
    const auto it = p.find(plan);
    if (it == p.end() || it->second <= 0) throw Error(Errc::kOutOfRange, "p has no mass where q does");
    kl += qv * std::log(qv / it->second);
  }
  return kl;
}

UncertaintyReport uncertainty_metrics(const std::vector<std::vector<Plan>>& samples, const std::vector<Plan>& gt,
                                      const std::vector<std::int64_t>& group_keys) {
  if (samples.empty()) throw Error(Errc::kEmptyInput, "no instances");
  if (samples.size() != gt.size() || group_keys.size() != gt.size()) {
    throw Error(Errc::kShapeMismatch, "samples, ground truth and group keys must align");
  }
  const std::size_t K = samples.front().size();
  if (K < 1) throw Error(Errc::kInvalidArgument, "need at least one sample per instance");
  for (const auto& s : samples)
    if (s.size() != K) throw Error(Errc::kShapeMismatch, "instances have different sample counts");

  std::map<std::int64_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < gt.size(); ++i) groups[group_keys[i]].push_back(i);

  UncertaintyReport r;
  r.samples_per_instance = static_cast<int>(K);
  r.groups = static_cast<int>(groups.size());
  for (const auto& [key, members] : groups) {
    std::map<Plan, double> gt_count, sample_count;
    for (std::size_t i : members) {
      gt_count[gt[i]] += 1;
      for (const auto& s : samples[i]) sample_count[s] += 1;
    }
    std::set<Plan> support;
    for (const auto& [p, _] : gt_count) support.insert(p);
    for (const auto& [p, _] : sample_count) support.insert(p);
    const double n_samples = static_cast<double>(members.size() * K);
    const double denom = n_samples + static_cast<double>(support.size());
    std::map<Plan, double> p_hat, q;
    for (const auto& p : support) {
      const auto it = sample_count.find(p);
      p_hat[p] = ((it == sample_count.end() ? 0.0 : it->second) + 1.0) / denom;
    }
    for (const auto& [p, c] : gt_count) q[p] = c / static_cast<double>(members.size());

    double nll = 0;
    for (std::size_t i : members) nll -= std::log(p_hat.at(gt[i]));
    nll /= static_cast<double>(members.size());

    double in_modes = 0;
    for (const auto& [p, c] : sample_count)
      if (gt_count.count(p)) in_modes += c;
    std::size_t hit_modes = 0;
    for (const auto& [p, _] : gt_count) hit_modes += sample_count.count(p);

    r.kl_div += kl_divergence(q, p_hat);
    r.nll += nll;
    r.mode_prec += in_modes / n_samples;
    r.mode_rec += static_cast<double>(hit_modes) / static_cast<double>(gt_count.size());
  }
  const double g = static_cast<double>(groups.size());
  r.kl_div /= g;
  r.nll /= g;
  r.mode_prec /= g;
  r.mode_rec /= g;
  return r;
}

}  // namespace mtid::metrics
