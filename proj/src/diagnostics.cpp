#include "lpr/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "lpr/errors.hpp"

namespace lpr {
namespace {

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

double vqa_accuracy(std::span<const std::size_t> predictions,
                    std::span<const std::vector<int>> annotator_counts) {
  if (predictions.size() != annotator_counts.size()) {
    throw InputError("predictions and labels are misaligned");
  }
  if (predictions.empty()) throw InputError("no instances to score");
  double total = 0.0;
  for (std::size_t n = 0; n < predictions.size(); ++n) {
    const auto& votes = annotator_counts[n];
    if (predictions[n] >= votes.size()) throw InputError("prediction outside vocabulary");
    total += std::min(1.0, votes[predictions[n]] / 3.0);
  }
  return total / static_cast<double>(predictions.size());
}

double vqa_accuracy(std::span<const std::size_t> predictions, const Dataset& dataset) {
  std::vector<std::vector<int>> votes;
  votes.reserve(dataset.size());
  for (const auto& inst : dataset.instances) votes.push_back(inst.label.counts);
  return vqa_accuracy(predictions, votes);
}

std::vector<std::size_t> hard_labels(const Dataset& dataset) {
  std::vector<std::size_t> out;
  out.reserve(dataset.size());
  for (const auto& inst : dataset.instances) out.push_back(inst.label.majority());
  return out;
}

double cohens_kappa(std::span<const std::size_t> predictions, std::span<const std::size_t> labels) {
  if (predictions.size() != labels.size()) throw InputError("predictions and labels are misaligned");
  if (predictions.empty()) throw InputError("no instances to score");
  const double n = static_cast<double>(predictions.size());
  std::map<std::size_t, std::pair<double, double>> marginals;  // class -> (pred, label)
  double agree = 0.0;
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    marginals[predictions[k]].first += 1.0;
    marginals[labels[k]].second += 1.0;
    if (predictions[k] == labels[k]) agree += 1.0;
  }
  const double p_o = agree / n;
  double p_e = 0.0;
  for (const auto& [cls, m] : marginals) p_e += (m.first / n) * (m.second / n);
  if (p_e >= 1.0) return p_o >= 1.0 ? 1.0 : 0.0;
  return (p_o - p_e) / (1.0 - p_e);
}

std::optional<double> LossConfusion::mean(std::size_t g, std::size_t p) const {
  const std::size_t k = g * dim() + p;
  if (counts.at(k) == 0) return std::nullopt;
  return loss_sum[k] / static_cast<double>(counts[k]);
}

std::size_t LossConfusion::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

LossConfusion loss_confusion_from_records(std::size_t type_id, std::vector<std::size_t> order,
                                          std::span<const MispredictionRecord> records) {
  if (order.size() < 2) throw InputError("loss confusion needs at least two in-type answers");
  LossConfusion conf;
  conf.type_id = type_id;
  conf.order = std::move(order);
  const std::size_t k = conf.order.size();
  conf.loss_sum.assign(k * k, 0.0);
  conf.counts.assign(k * k, 0);
  std::map<std::size_t, std::size_t> position;
  for (std::size_t r = 0; r < k; ++r) position[conf.order[r]] = r;
  for (const auto& rec : records) {
    if (rec.truth == rec.predicted) continue;
    auto g = position.find(rec.truth);
    auto p = position.find(rec.predicted);
    if (g == position.end() || p == position.end()) continue;
    conf.loss_sum[g->second * k + p->second] += rec.loss;
    ++conf.counts[g->second * k + p->second];
  }
  return conf;
}

std::vector<std::size_t> frequency_order(const TypeCountTable& train_counts, std::size_t type) {
  auto order = train_counts.answer_set(type);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return train_counts.count(type, a) > train_counts.count(type, b);
  });
  return order;
}

LossConfusion loss_confusion(const ModelParams& params, const Dataset& dataset, std::size_t type,
                             LossKind loss_kind, const TypeCountTable& train_counts,
                             FocalParams focal_params) {
  if (train_counts.num_answers() != dataset.num_answers) {
    throw InputError("count table does not match dataset vocabulary");
  }
  auto order = frequency_order(train_counts, type);
  if (order.size() < 2) throw InputError("loss confusion needs at least two in-type answers");

  const Evaluation ev = evaluate(dataset, params);
  const std::vector<double> ones(dataset.num_answers, 1.0);
  std::vector<MispredictionRecord> records;
  for (std::size_t n = 0; n < dataset.size(); ++n) {
    const auto& inst = dataset.instances[n];
    if (inst.type_id != type) continue;
    const std::size_t truth = inst.label.majority();
    const std::size_t pred = ev.predictions[n];
    if (truth == pred) continue;
    std::span<const double> logits(ev.logits.col(static_cast<Eigen::Index>(n)).data(),
                                   dataset.num_answers);
    const double loss =
        classification_loss(loss_kind, logits, inst.label.scores, ones, focal_params).loss;
    records.push_back({truth, pred, loss});
  }
  return loss_confusion_from_records(type, std::move(order), records);
}

TriangleAsymmetry triangle_asymmetry(const LossConfusion& conf) {
  TriangleAsymmetry t;
  double upper_sum = 0.0, lower_sum = 0.0;
  for (std::size_t g = 0; g < conf.dim(); ++g) {
    for (std::size_t p = 0; p < conf.dim(); ++p) {
      const std::size_t k = g * conf.dim() + p;
      if (p > g) {
        upper_sum += conf.loss_sum[k];
        t.upper_count += conf.counts[k];
      } else if (p < g) {
        lower_sum += conf.loss_sum[k];
        t.lower_count += conf.counts[k];
      }
    }
  }
  if (t.upper_count == 0 || t.lower_count == 0) throw InputError("insufficient mispredictions");
  t.upper_mean = upper_sum / static_cast<double>(t.upper_count);
  t.lower_mean = lower_sum / static_cast<double>(t.lower_count);
  t.ratio = t.upper_mean / t.lower_mean;
  return t;
}

GradientNormSeries gradient_norm_trace(const TrainingTrace& trace) {
  if (trace.rows.empty()) throw InputError("empty training trace");
  GradientNormSeries s;
  for (const auto& row : trace.rows) {
    s.iterations.push_back(row.iteration);
    s.phases.push_back(row.phase);
    for (std::size_t g = 0; g < kNumGroups; ++g) s.norms[g].push_back(row.grad_norms[g]);
  }
  return s;
}

void write_gradient_norm_csv(std::ostream& out, const GradientNormSeries& series) {
  out << "iter,group,norm\n";
  for (std::size_t k = 0; k < series.iterations.size(); ++k) {
    for (std::size_t g = 0; g < kNumGroups; ++g) {
      out << series.iterations[k] << ',' << kGroupNames[g] << ',' << fmt_double(series.norms[g][k])
          << '\n';
    }
  }
}

void write_confusion_csv(std::ostream& out, const LossConfusion& conf,
                         const AnswerVocabulary& vocab) {
  out << "truth,predicted,count,mean_loss\n";
  for (std::size_t g = 0; g < conf.dim(); ++g) {
    for (std::size_t p = 0; p < conf.dim(); ++p) {
      auto m = conf.mean(g, p);
      if (!m) continue;
      out << vocab.answer(conf.order[g]) << ',' << vocab.answer(conf.order[p]) << ','
          << conf.count(g, p) << ',' << fmt_double(*m) << '\n';
    }
  }
}

void write_trace_csv(std::ostream& out, const TrainingTrace& trace) {
  out << "iter,phase,epoch,loss_total,loss_cls,loss_mask";
  for (auto name : kGroupNames) out << ",grad_" << name;
  out << '\n';
  for (const auto& r : trace.rows) {
    out << r.iteration << ',' << r.phase << ',' << r.epoch << ',' << fmt_double(r.loss_total) << ','
        << fmt_double(r.loss_cls) << ',' << fmt_double(r.loss_mask);
    for (double g : r.grad_norms) out << ',' << fmt_double(g);
    out << '\n';
  }
}

TrainingTrace read_trace_csv(std::istream& in) {
  TrainingTrace trace;
  std::string line;
  if (!std::getline(in, line)) throw InputError("empty trace file");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != 6 + kNumGroups) {
      throw InputError("trace line " + std::to_string(lineno) + " has wrong field count");
    }
    try {
      TraceRow r;
      r.iteration = std::stol(fields[0]);
      r.phase = std::stoi(fields[1]);
      r.epoch = std::stoi(fields[2]);
      r.loss_total = std::stod(fields[3]);
      r.loss_cls = std::stod(fields[4]);
      r.loss_mask = std::stod(fields[5]);
      for (std::size_t g = 0; g < kNumGroups; ++g) r.grad_norms[g] = std::stod(fields[6 + g]);
      if (r.phase == 1 && (trace.rows.empty() || trace.rows.back().epoch != r.epoch)) {
        ++trace.mask_epochs;
      }
      trace.rows.push_back(r);
    } catch (const std::logic_error&) {
      throw InputError("trace line " + std::to_string(lineno) + " is not numeric");
    }
  }
  return trace;
}

}  // namespace lpr
