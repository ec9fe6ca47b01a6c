#pragma once

#include <algorithm>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "adgan/batching.hpp"
#include "adgan/dataset.hpp"
#include "adgan/metrics.hpp"
#include "adgan/model.hpp"
#include "adgan/rng.hpp"
#include "adgan/trainer.hpp"

namespace adgan {

// Held-out evaluation split over the paired population. Stratified per
// class so every class appears in both halves, deterministic in the seed.
struct SplitIndices {
  std::vector<int> train;  // dataset consumer indices, paired, labeled
  std::vector<int> test;
};

inline SplitIndices split_paired(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (test_fraction <= 0.0 || test_fraction >= 1.0)
    throw ValidationError("split: test fraction must lie in (0, 1)");
  const auto paired = ds.paired_indices();
  if (paired.empty()) throw ValidationError("split: no paired labeled consumers");
  std::map<int, std::vector<int>> by_class;
  for (int idx : paired) by_class[ds.consumers[static_cast<std::size_t>(idx)].label].push_back(idx);
  Rng rng(seed);
  SplitIndices split;
  for (auto& [label, members] : by_class) {
    rng.shuffle(members);
    const int n_test = std::max(1, static_cast<int>(members.size() * test_fraction));
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (static_cast<int>(i) < n_test)
        split.test.push_back(members[i]);
      else
        split.train.push_back(members[i]);
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  if (split.train.empty() || split.test.empty())
    throw ValidationError("split: a side of the split came out empty");
  return split;
}

// Matrices for one experiment: training tensors (compression fitted on the
// training split only) plus the held-out test block compressed with the
// same statistics.
struct PreparedData {
  TrainData train;
  Matrix u_test;
  Matrix s_test;
  std::vector<int> y_test;
};

inline PreparedData prepare_experiment(const Dataset& ds, const SplitIndices& split) {
  PreparedData out;
  std::vector<std::array<int, kSurveyQuestions>> train_answers;
  for (int idx : split.train)
    train_answers.push_back(*ds.consumers[static_cast<std::size_t>(idx)].survey);
  out.train.stats = fit_survey_stats(train_answers);

  const auto fill = [&](const std::vector<int>& rows, Matrix& u, Matrix& s,
                        std::vector<int>& labels) {
    u = Matrix(static_cast<int>(rows.size()), kStratumDims + kLifeDims);
    s = Matrix(static_cast<int>(rows.size()), kSurveyQuestions);
    labels.clear();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& c = ds.consumers[static_cast<std::size_t>(rows[i])];
      const auto uv = c.u;
      for (int j = 0; j < static_cast<int>(uv.size()); ++j) u.at(static_cast<int>(i), j) = uv[static_cast<std::size_t>(j)];
      const auto sv = compress_survey(*c.survey, out.train.stats);
      for (int j = 0; j < kSurveyQuestions; ++j) s.at(static_cast<int>(i), j) = sv[static_cast<std::size_t>(j)];
      labels.push_back(c.label);
    }
  };
  fill(split.train, out.train.u_paired, out.train.s_paired, out.train.labels_paired);
  fill(split.test, out.u_test, out.s_test, out.y_test);

  const auto unpaired = ds.unpaired_indices();
  out.train.u_unpaired = Matrix(static_cast<int>(unpaired.size()), kStratumDims + kLifeDims);
  out.train.labels_unpaired.clear();
  for (std::size_t i = 0; i < unpaired.size(); ++i) {
    const auto& c = ds.consumers[static_cast<std::size_t>(unpaired[i])];
    for (int j = 0; j < static_cast<int>(c.u.size()); ++j)
      out.train.u_unpaired.at(static_cast<int>(i), j) = c.u[static_cast<std::size_t>(j)];
    out.train.labels_unpaired.push_back(c.label);
  }
  return out;
}

// Classify consumers through the discriminator's label head using their
// real surveys; argmax with deterministic tie-breaking toward the lower
// class index.
inline ConfusionMatrix classify(const ParameterSet& params, const ArchConfig& arch,
                                const Matrix& u, const Matrix& s, const std::vector<int>& truth) {
  const Discrimination d = discriminate(params, arch, u, s);
  ConfusionMatrix cm(arch.n_classes);
  for (int r = 0; r < d.probs.rows(); ++r) {
    int best = 0;
    for (int c = 1; c < arch.n_classes; ++c)
      if (d.probs.at(r, c) > d.probs.at(r, best)) best = c;
    cm.add(truth[static_cast<std::size_t>(r)], best);
  }
  return cm;
}

// Train once and evaluate on the held-out pairs.
inline MetricsReport run_adgan_once(const PreparedData& data, const TrainConfig& cfg,
                                    const ArchConfig& arch) {
  auto [params, log] = train(data.train, cfg, arch);
  return compute_metrics(classify(params, arch, data.u_test, data.s_test, data.y_test));
}

// n seeded runs of one sampling-strategy variant; run seeds derive from the
// base seed so the suite is reproducible as a whole.
inline AggregateMetrics run_adgan_suite(const PreparedData& data, TrainConfig cfg,
                                        const ArchConfig& arch, int n_runs, int max_parallel) {
  const std::uint64_t base_seed = cfg.seed;
  return repeated_runs(
      n_runs,
      [&, base_seed](int run) {
        TrainConfig run_cfg = cfg;
        run_cfg.seed = base_seed + 1000003ull * static_cast<std::uint64_t>(run);
        return run_adgan_once(data, run_cfg, arch);
      },
      max_parallel);
}

// Pairs-only logistic-regression reference on U concatenated with the
// compressed survey.
inline MetricsReport run_baseline_once(const PreparedData& data) {
  const int d_u = data.train.u_paired.cols();
  const int d_s = data.train.s_paired.cols();
  const auto stack = [&](const Matrix& u, const Matrix& s) {
    Matrix x(u.rows(), d_u + d_s);
    for (int r = 0; r < u.rows(); ++r) {
      for (int c = 0; c < d_u; ++c) x.at(r, c) = u.at(r, c);
      for (int c = 0; c < d_s; ++c) x.at(r, d_u + c) = s.at(r, c);
    }
    return x;
  };
  const ConfusionMatrix cm =
      baseline_logreg(stack(data.train.u_paired, data.train.s_paired), data.train.labels_paired,
                      stack(data.u_test, data.s_test), data.y_test, kFrtClasses);
  return compute_metrics(cm);
}

struct VariantRow {
  std::string name;
  AggregateMetrics agg;
};

// The comparison table of the reproduction pipeline: the logistic baseline
// plus the three sampling variants of the model.
inline std::string format_comparison_table(const std::vector<VariantRow>& rows) {
  std::ostringstream out;
  out << "model,0-F1,1-F1,2-F1,3-F1,macro_precision,macro_recall,macro_f1,accuracy\n";
  for (const auto& row : rows) {
    out << row.name;
    for (std::size_t c = 0; c < row.agg.mean.f1_per_class.size(); ++c)
      out << ',' << format_mean_std(row.agg.mean.f1_per_class[c], row.agg.stddev.f1_per_class[c]);
    out << ',' << format_mean_std(row.agg.mean.macro_precision, row.agg.stddev.macro_precision);
    out << ',' << format_mean_std(row.agg.mean.macro_recall, row.agg.stddev.macro_recall);
    out << ',' << format_mean_std(row.agg.mean.macro_f1, row.agg.stddev.macro_f1);
    out << ',' << format_mean_std(row.agg.mean.accuracy, row.agg.stddev.accuracy);
    out << '\n';
  }
  return out.str();
}

}  // namespace adgan
