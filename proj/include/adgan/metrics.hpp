#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "adgan/adam.hpp"
#include "adgan/common.hpp"
#include "adgan/matrix.hpp"
#include "adgan/params.hpp"
#include "adgan/tape.hpp"

namespace adgan {

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int n_classes = 4) : n_(n_classes), counts_(static_cast<std::size_t>(n_classes * n_classes), 0) {}

  void add(int truth, int predicted, long count = 1) {
    if (truth < 0 || truth >= n_ || predicted < 0 || predicted >= n_)
      throw ValidationError("confusion matrix: class index out of range");
    counts_[static_cast<std::size_t>(truth * n_ + predicted)] += count;
  }

  long at(int truth, int predicted) const {
    return counts_[static_cast<std::size_t>(truth * n_ + predicted)];
  }

  int classes() const { return n_; }

  long total() const {
    long t = 0;
    for (long c : counts_) t += c;
    return t;
  }

 private:
  int n_;
  std::vector<long> counts_;
};

struct MetricsReport {
  std::vector<double> f1_per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
};

// Per-class precision/recall/F1 with the 0-convention on empty
// denominators (a class never predicted and never true contributes 0);
// macro scores are unweighted class means; accuracy is trace/total.
inline MetricsReport compute_metrics(const ConfusionMatrix& cm) {
  const int k = cm.classes();
  if (cm.total() == 0) throw ValidationError("compute_metrics: empty confusion matrix");
  MetricsReport rep;
  rep.f1_per_class.resize(static_cast<std::size_t>(k), 0.0);
  long trace = 0;
  for (int c = 0; c < k; ++c) {
    long tp = cm.at(c, c), fp = 0, fn = 0;
    for (int o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    trace += tp;
    const double precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
    const double recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
    const double f1 =
        precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
    rep.f1_per_class[static_cast<std::size_t>(c)] = f1;
    rep.macro_precision += precision / k;
    rep.macro_recall += recall / k;
    rep.macro_f1 += f1 / k;
  }
  rep.accuracy = static_cast<double>(trace) / cm.total();
  return rep;
}

// Mean(std) presentation: 5 decimals for the mean, 3 for the population
// standard deviation, e.g. 0.40495(0.013).
inline std::string format_mean_std(double mean, double sd) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.5f(%.3f)", mean, sd);
  return buf;
}

struct AggregateMetrics {
  MetricsReport mean;
  MetricsReport stddev;  // population standard deviation over runs
  int runs_completed = 0;
  int runs_failed = 0;
  std::string warning;
};

inline AggregateMetrics aggregate_runs(const std::vector<MetricsReport>& runs, int failed = 0) {
  if (runs.empty()) throw ValidationError("aggregate_runs: no completed runs");
  const std::size_t k = runs.front().f1_per_class.size();
  AggregateMetrics agg;
  agg.runs_completed = static_cast<int>(runs.size());
  agg.runs_failed = failed;
  if (failed > 0)
    agg.warning = std::to_string(failed) + " run(s) failed; statistics cover completed runs only";

  const auto fold = [&](const std::function<double(const MetricsReport&)>& get, double& mean_out,
                        double& sd_out) {
    double mean = 0.0;
    for (const auto& r : runs) mean += get(r);
    mean /= static_cast<double>(runs.size());
    double var = 0.0;
    for (const auto& r : runs) {
      const double d = get(r) - mean;
      var += d * d;
    }
    mean_out = mean;
    sd_out = std::sqrt(var / static_cast<double>(runs.size()));
  };

  agg.mean.f1_per_class.resize(k);
  agg.stddev.f1_per_class.resize(k);
  for (std::size_t c = 0; c < k; ++c)
    fold([c](const MetricsReport& r) { return r.f1_per_class[c]; }, agg.mean.f1_per_class[c],
         agg.stddev.f1_per_class[c]);
  fold([](const MetricsReport& r) { return r.macro_precision; }, agg.mean.macro_precision,
       agg.stddev.macro_precision);
  fold([](const MetricsReport& r) { return r.macro_recall; }, agg.mean.macro_recall,
       agg.stddev.macro_recall);
  fold([](const MetricsReport& r) { return r.macro_f1; }, agg.mean.macro_f1,
       agg.stddev.macro_f1);
  fold([](const MetricsReport& r) { return r.accuracy; }, agg.mean.accuracy,
       agg.stddev.accuracy);
  return agg;
}

// Runs n independent seeded evaluations (in parallel when allowed) and
// reports mean-of-run-metrics with population standard deviations. A run
// that throws is recorded as failed and excluded from the statistics.
inline AggregateMetrics repeated_runs(int n, const std::function<MetricsReport(int)>& run_fn,
                                      int max_parallel = 1) {
  if (n < 2) throw ValidationError("repeated_runs: need at least 2 runs");
  std::vector<MetricsReport> results(static_cast<std::size_t>(n));
  std::vector<char> ok(static_cast<std::size_t>(n), 0);
  if (max_parallel <= 1) {
    for (int i = 0; i < n; ++i) {
      try {
        results[static_cast<std::size_t>(i)] = run_fn(i);
        ok[static_cast<std::size_t>(i)] = 1;
      } catch (const std::exception&) {
      }
    }
  } else {
    std::vector<std::thread> workers;
    std::atomic<int> next{0};
    for (int w = 0; w < max_parallel; ++w)
      workers.emplace_back([&] {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
          try {
            results[static_cast<std::size_t>(i)] = run_fn(i);
            ok[static_cast<std::size_t>(i)] = 1;
          } catch (const std::exception&) {
          }
        }
      });
    for (auto& w : workers) w.join();
  }
  std::vector<MetricsReport> completed;
  for (int i = 0; i < n; ++i)
    if (ok[static_cast<std::size_t>(i)]) completed.push_back(results[static_cast<std::size_t>(i)]);
  return aggregate_runs(completed, n - static_cast<int>(completed.size()));
}

// Multinomial logistic regression trained by full-batch gradient descent
// (Adam) on the concatenated features; the pairs-only reference the GAN
// variants are compared against. Deterministic: zero-initialized weights.
inline ConfusionMatrix baseline_logreg(const Matrix& x_train, const std::vector<int>& y_train,
                                       const Matrix& x_test, const std::vector<int>& y_test,
                                       int n_classes, int iterations = 400, double lr = 0.05) {
  if (x_train.rows() == 0 || x_test.rows() == 0)
    throw ValidationError("logreg: empty split");
  if (static_cast<std::size_t>(x_train.rows()) != y_train.size() ||
      static_cast<std::size_t>(x_test.rows()) != y_test.size())
    throw ValidationError("logreg: features and labels must align");
  {
    bool multi = false;
    for (int y : y_train)
      if (y != y_train.front()) multi = true;
    if (!multi) throw ValidationError("logreg: degenerate single-class training set");
  }

  ParameterSet ps;
  ps.add("w", Matrix(x_train.cols(), n_classes));
  ps.add("b", Matrix(1, n_classes));
  AdamState adam(lr, 0.9, 0.999);
  Matrix onehot(static_cast<int>(y_train.size()), n_classes);
  for (std::size_t i = 0; i < y_train.size(); ++i) onehot.at(static_cast<int>(i), y_train[i]) = 1.0;

  for (int it = 0; it < iterations; ++it) {
    Tape t;
    const int x = t.input(x_train);
    const int w = t.param(ps.at("w"));
    const int b = t.param(ps.at("b"));
    const int loss = t.softmax_xent(t.add_rowvec(t.matmul(x, w), b), t.constant(onehot));
    const auto grads = t.gradients(loss, {w, b});
    adam.step(ps, {{"w", grads[0]}, {"b", grads[1]}});
  }

  const Matrix scores = matmul(x_test, ps.at("w"));
  ConfusionMatrix cm(n_classes);
  const Matrix& bias = ps.at("b");
  for (int r = 0; r < x_test.rows(); ++r) {
    int best = 0;
    double best_v = scores.at(r, 0) + bias.at(0, 0);
    for (int c = 1; c < n_classes; ++c) {
      const double v = scores.at(r, c) + bias.at(0, c);
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    cm.add(y_test[static_cast<std::size_t>(r)], best);
  }
  return cm;
}

}  // namespace adgan
