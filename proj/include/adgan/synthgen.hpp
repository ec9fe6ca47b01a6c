#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "adgan/common.hpp"
#include "adgan/features.hpp"
#include "adgan/rng.hpp"

namespace adgan {

// Synthetic asymmetric two-domain dataset generator. It reproduces the data
// pathologies the pipeline has to survive - strong class imbalance, a small
// paired subset, near-duplicate surveys across labels - at desk scale.
struct SynthConfig {
  int n_total = 10000;
  int n_paired = 450;
  std::array<double, kFrtClasses> class_proportions{700.0 / 4492.0, 997.0 / 4492.0,
                                                    2076.0 / 4492.0, 719.0 / 4492.0};
  double pairing_overlap = 1.0;  // fraction of surveyed consumers that also have activity
  int collision_count = 50;      // planted cross-label near-duplicate survey pairs
  double signal_strength = 0.4;  // 0 = no label signal, 1 = strongly separable
  int avg_transactions = 40;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_total < kFrtClasses) throw ValidationError("synth: n_total too small");
    if (n_paired < 0 || n_paired > n_total)
      throw ValidationError("synth: n_paired must lie in [0, n_total]");
    double sum = 0.0;
    for (double p : class_proportions) {
      if (p <= 0.0) throw ValidationError("synth: class proportions must be positive");
      sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-9)
      throw ValidationError("synth: class proportions must sum to 1");
    if (pairing_overlap <= 0.0 || pairing_overlap > 1.0)
      throw ValidationError("synth: pairing_overlap must lie in (0, 1]");
    if (signal_strength < 0.0 || signal_strength > 1.0)
      throw ValidationError("synth: signal_strength must lie in [0, 1]");
    if (2 * collision_count > n_paired)
      throw ValidationError("synth: collision pairs exceed the paired population");
    if (avg_transactions < 1) throw ValidationError("synth: avg_transactions must be >= 1");
  }

  std::string describe() const {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "n_total=%d n_paired=%d proportions=%.6f,%.6f,%.6f,%.6f overlap=%.3f "
                  "collisions=%d signal=%.3f avg_trans=%d seed=%llu",
                  n_total, n_paired, class_proportions[0], class_proportions[1],
                  class_proportions[2], class_proportions[3], pairing_overlap, collision_count,
                  signal_strength, avg_transactions,
                  static_cast<unsigned long long>(seed));
    return buf;
  }
};

// Desk-scale preset: pairing fraction 450/10000 = 4.5%, close to the 4.3%
// cross-domain rate of the motivating data, with the same class imbalance.
inline SynthConfig default_desk_preset() {
  SynthConfig cfg;
  cfg.validate();
  return cfg;
}

struct SynthData {
  std::vector<TransactionRecord> transactions;
  // One row per consumer: paired consumers carry answers, everyone carries a
  // label (labels come from portfolios, not from the survey).
  std::vector<SurveyRow> surveys;
  // Ground truth for the planted near-duplicate survey pairs.
  std::vector<std::pair<std::string, std::string>> planted_collisions;
};

namespace detail {

// Concentrates fraction f of the category mass on the set S, uniform
// elsewhere.
inline std::array<double, kCategoryCount> category_proto(std::initializer_list<int> s, double f) {
  std::array<double, kCategoryCount> p{};
  for (int k = 0; k < kCategoryCount; ++k) p[static_cast<std::size_t>(k)] = (1.0 - f) / kCategoryCount;
  for (int k : s) p[static_cast<std::size_t>(k)] += f / static_cast<double>(s.size());
  return p;
}

// Exact largest-remainder apportionment of n into shares.
inline std::array<int, kFrtClasses> apportion(int n, const std::array<double, kFrtClasses>& p) {
  std::array<int, kFrtClasses> counts{};
  std::array<double, kFrtClasses> frac{};
  int assigned = 0;
  for (int c = 0; c < kFrtClasses; ++c) {
    const double exact = n * p[static_cast<std::size_t>(c)];
    counts[static_cast<std::size_t>(c)] = static_cast<int>(exact);
    frac[static_cast<std::size_t>(c)] = exact - counts[static_cast<std::size_t>(c)];
    assigned += counts[static_cast<std::size_t>(c)];
  }
  while (assigned < n) {
    int best = 0;
    for (int c = 1; c < kFrtClasses; ++c)
      if (frac[static_cast<std::size_t>(c)] > frac[static_cast<std::size_t>(best)]) best = c;
    ++counts[static_cast<std::size_t>(best)];
    frac[static_cast<std::size_t>(best)] = -1.0;
    ++assigned;
  }
  return counts;
}

}  // namespace detail

inline SynthData synthesize(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);

  // Exact class apportionment, then shuffled over consumer slots.
  const auto class_counts = detail::apportion(cfg.n_total, cfg.class_proportions);
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(cfg.n_total));
  for (int c = 0; c < kFrtClasses; ++c)
    labels.insert(labels.end(), static_cast<std::size_t>(class_counts[static_cast<std::size_t>(c)]), c);
  rng.shuffle(labels);

  int width = 1;
  for (int v = cfg.n_total; v >= 10; v /= 10) ++width;
  const auto make_id = [&](int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "c%0*d", width, i + 1);
    return std::string(buf);
  };

  // Class geometry over transaction categories. The majority class (2) and
  // class 3 carry plain one-component signal. The minority classes are
  // two-faced: class 0 is a two-component mixture whose components each
  // boost one of a category pair, class 1 boosts both at half intensity, so
  // their category MEANS coincide and only the joint structure separates
  // them. Linear "marker" categories for the minorities scale with the
  // square of the signal dial: at full signal everything is linearly
  // separable, at moderate signal the minorities are not.
  const double s = cfg.signal_strength;
  const auto xor_a = detail::category_proto({4}, 0.55);
  const auto xor_b = detail::category_proto({8}, 0.55);
  const auto both = detail::category_proto({4, 8}, 0.55);
  const auto marker0 = detail::category_proto({12}, 0.8);
  const auto marker1 = detail::category_proto({16}, 0.8);
  const auto block2 = detail::category_proto({1, 13}, 0.55);
  const auto block3 = detail::category_proto({5, 17}, 0.55);
  // The markers switch on only in the upper half of the signal dial: at
  // full signal they make the minority pair linearly separable, at moderate
  // signal they vanish exactly so only the mixture structure distinguishes
  // class 0 from class 1.
  const double ramp = std::max(0.0, (s - 0.55) / 0.45);
  const double s_marker = 0.35 * ramp * ramp;
  const double s3 = s;

  // Survey prototypes: informative for classes 2 and 3, nearly flat for the
  // minorities, which even share one prototype - the multivalued phenomenon
  // in the raw data.
  std::array<std::array<double, kSurveyQuestions>, kFrtClasses> survey_shift{};
  std::array<double, kSurveyQuestions> survey_base{};
  const std::array<double, kFrtClasses> survey_scale{std::pow(s, 2.5), std::pow(s, 2.5),
                                                     0.6 * s, s * s};
  for (int q = 0; q < kSurveyQuestions; ++q)
    survey_base[static_cast<std::size_t>(q)] = rng.uniform(4.0, 6.0);
  for (int c = 0; c < kFrtClasses; ++c)
    for (int q = 0; q < kSurveyQuestions; ++q) {
      const double shift = c == 1 ? survey_shift[0][static_cast<std::size_t>(q)]
                                  : rng.uniform(-2.0, 2.0);
      survey_shift[static_cast<std::size_t>(c)][static_cast<std::size_t>(q)] = shift;
    }

  // Stratified choice of the paired subset so E_f mirrors the population
  // class mix exactly (within the +-1 of apportionment).
  const auto paired_counts = detail::apportion(cfg.n_paired, cfg.class_proportions);
  std::array<std::vector<int>, kFrtClasses> members{};
  for (int i = 0; i < cfg.n_total; ++i)
    members[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])].push_back(i);
  for (int c = 0; c < kFrtClasses; ++c) {
    if (class_counts[static_cast<std::size_t>(c)] == 0 ||
        class_counts[static_cast<std::size_t>(c)] == paired_counts[static_cast<std::size_t>(c)])
      throw ValidationError("synth: class " + std::to_string(c) +
                            " would be missing from E_f or E_l");
  }
  std::vector<bool> paired(static_cast<std::size_t>(cfg.n_total), false);
  std::vector<int> paired_list;
  for (int c = 0; c < kFrtClasses; ++c) {
    auto& pool = members[static_cast<std::size_t>(c)];
    const auto pick = rng.sample_indices(static_cast<int>(pool.size()),
                                         paired_counts[static_cast<std::size_t>(c)]);
    for (int j : pick) {
      paired[static_cast<std::size_t>(pool[static_cast<std::size_t>(j)])] = true;
      paired_list.push_back(pool[static_cast<std::size_t>(j)]);
    }
  }
  std::sort(paired_list.begin(), paired_list.end());

  // A slice of surveyed consumers may fall outside the activity domain.
  const int without_activity =
      static_cast<int>((1.0 - cfg.pairing_overlap) * cfg.n_paired + 1e-9);
  std::vector<bool> has_activity(static_cast<std::size_t>(cfg.n_total), true);
  {
    const auto drop = rng.sample_indices(static_cast<int>(paired_list.size()), without_activity);
    for (int j : drop)
      has_activity[static_cast<std::size_t>(paired_list[static_cast<std::size_t>(j)])] = false;
  }

  SynthData out;

  // Transactions: per-consumer category mixture of an individual Dirichlet
  // draw, the class component, and the class marker; log-normal wealth
  // factor so the decile analysis sees a wide expense range.
  for (int i = 0; i < cfg.n_total; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    const std::string id = make_id(i);
    std::array<double, kCategoryCount> mix{};
    double isum = 0.0;
    for (int k = 0; k < kCategoryCount; ++k) {
      // Dirichlet(1) individual component via normalized exponentials.
      double u = rng.next_unit();
      while (u <= 0.0) u = rng.next_unit();
      mix[static_cast<std::size_t>(k)] = -std::log(u);
      isum += mix[static_cast<std::size_t>(k)];
    }
    const bool face = rng.next_unit() < 0.5;  // which component of class 0
    const std::array<double, kCategoryCount>* component = &block2;
    const std::array<double, kCategoryCount>* marker = nullptr;
    double s_comp = s;
    switch (label) {
      case 0:
        component = face ? &xor_a : &xor_b;
        marker = &marker0;
        break;
      case 1:
        component = &both;
        marker = &marker1;
        break;
      case 2:
        component = &block2;
        break;
      case 3:
        component = &block3;
        s_comp = s3;
        break;
    }
    double cum = 0.0;
    std::array<double, kCategoryCount> cdf{};
    for (int k = 0; k < kCategoryCount; ++k) {
      const auto sk = static_cast<std::size_t>(k);
      double m = (1.0 - s_comp) * mix[sk] / isum + s_comp * (*component)[sk];
      if (marker != nullptr) m += s_marker * (*marker)[sk];
      cum += m;
      cdf[sk] = cum;
    }
    const double wealth = std::exp(rng.normal(3.0, 1.1));
    const int n_trans =
        std::max(1, cfg.avg_transactions / 2 + rng.uniform_int(cfg.avg_transactions));
    if (!has_activity[static_cast<std::size_t>(i)]) continue;
    for (int t = 0; t < n_trans; ++t) {
      const double u = rng.next_unit() * cum;
      int k = 0;
      while (k + 1 < kCategoryCount && cdf[static_cast<std::size_t>(k)] < u) ++k;
      TransactionRecord tr;
      tr.consumer_id = id;
      tr.category = k;
      tr.amount = wealth * std::exp(rng.normal(0.0, 0.8));
      out.transactions.push_back(std::move(tr));
    }
  }

  // Surveys: answers drawn around the signal-weighted prototype.
  std::vector<SurveyRow> rows(static_cast<std::size_t>(cfg.n_total));
  for (int i = 0; i < cfg.n_total; ++i) {
    SurveyRow& row = rows[static_cast<std::size_t>(i)];
    row.consumer_id = make_id(i);
    row.label = labels[static_cast<std::size_t>(i)];
    if (!paired[static_cast<std::size_t>(i)]) continue;
    const int label = labels[static_cast<std::size_t>(i)];
    std::array<int, kSurveyQuestions> ans{};
    const double scale = survey_scale[static_cast<std::size_t>(label)];
    for (int q = 0; q < kSurveyQuestions; ++q) {
      const auto sq = static_cast<std::size_t>(q);
      const double mean =
          survey_base[sq] + scale * survey_shift[static_cast<std::size_t>(label)][sq];
      const double v = rng.normal(mean, 1.2);
      ans[sq] = std::clamp(static_cast<int>(std::lround(v)), 1, 7);
    }
    row.answers = ans;
  }

  // Planted multivalued collisions: pairs with different labels whose
  // surveys agree on all but two questions.
  {
    std::vector<int> order(paired_list);
    rng.shuffle(order);
    int made = 0;
    std::vector<bool> used(static_cast<std::size_t>(cfg.n_total), false);
    for (std::size_t a = 0; a < order.size() && made < cfg.collision_count; ++a) {
      const int ia = order[a];
      if (used[static_cast<std::size_t>(ia)]) continue;
      for (std::size_t b = a + 1; b < order.size(); ++b) {
        const int ib = order[b];
        if (used[static_cast<std::size_t>(ib)]) continue;
        if (labels[static_cast<std::size_t>(ia)] == labels[static_cast<std::size_t>(ib)]) continue;
        auto copy = *rows[static_cast<std::size_t>(ia)].answers;
        const auto flip = rng.sample_indices(kSurveyQuestions, 2);
        for (int q : flip) {
          const auto sq = static_cast<std::size_t>(q);
          copy[sq] = 1 + (copy[sq] % 7);  // guaranteed different value in 1..7
        }
        rows[static_cast<std::size_t>(ib)].answers = copy;
        used[static_cast<std::size_t>(ia)] = used[static_cast<std::size_t>(ib)] = true;
        out.planted_collisions.emplace_back(make_id(ia), make_id(ib));
        ++made;
        break;
      }
    }
    if (made < cfg.collision_count)
      throw ValidationError("synth: could not place all requested collision pairs");
  }

  out.surveys = std::move(rows);
  return out;
}

inline void write_synth_data(const SynthData& data, const std::string& dir,
                             const std::string& provenance) {
  {
    std::ofstream out(dir + "/transactions.csv");
    if (!out) throw ValidationError("cannot write " + dir + "/transactions.csv");
    write_transactions_csv(out, data.transactions, provenance);
  }
  {
    std::ofstream out(dir + "/surveys.csv");
    if (!out) throw ValidationError("cannot write " + dir + "/surveys.csv");
    write_surveys_csv(out, data.surveys, provenance);
  }
}

}  // namespace adgan
