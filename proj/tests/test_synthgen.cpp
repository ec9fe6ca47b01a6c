#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "adgan/dataset.hpp"
#include "adgan/experiment.hpp"
#include "adgan/metrics.hpp"
#include "adgan/synthgen.hpp"

using namespace adgan;

namespace {

SynthConfig small_config() {
  SynthConfig cfg;
  cfg.n_total = 1200;
  cfg.n_paired = 160;
  cfg.collision_count = 10;
  cfg.avg_transactions = 12;
  cfg.seed = 9;
  return cfg;
}

}  // namespace

TEST_CASE("desk preset", "[synthgen]") {
  const SynthConfig cfg = default_desk_preset();
  SECTION("pairing fraction sits near the motivating 4.3%") {
    const double fraction = static_cast<double>(cfg.n_paired) / cfg.n_total;
    CHECK(fraction == Catch::Approx(0.045));
    CHECK(std::fabs(fraction - 0.043) < 0.01);
  }
  SECTION("preset validates") { CHECK_NOTHROW(cfg.validate()); }
  SECTION("class proportions follow the survey population") {
    CHECK(cfg.class_proportions[0] == Catch::Approx(700.0 / 4492.0));
    CHECK(cfg.class_proportions[2] == Catch::Approx(2076.0 / 4492.0));
  }
}

TEST_CASE("config validation", "[synthgen]") {
  SynthConfig cfg = small_config();
  SECTION("collisions beyond the paired population are infeasible") {
    cfg.collision_count = cfg.n_paired;  // needs 2x that many consumers
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
  }
  SECTION("proportions must sum to one") {
    cfg.class_proportions = {0.3, 0.3, 0.3, 0.3};
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
  }
  SECTION("pairing overlap bounds") {
    cfg.pairing_overlap = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
  }
}

TEST_CASE("synthetic data respects the configured shape", "[synthgen]") {
  const SynthConfig cfg = small_config();
  const SynthData data = synthesize(cfg);

  SECTION("class counts match proportional targets within one") {
    std::map<int, int> counts;
    for (const auto& row : data.surveys) ++counts[*row.label];
    for (int c = 0; c < 4; ++c) {
      const double target = cfg.n_total * cfg.class_proportions[static_cast<std::size_t>(c)];
      CHECK(std::fabs(counts[c] - target) <= 1.0);
    }
  }
  SECTION("exactly n_paired consumers carry surveys, with matching class mix") {
    int paired = 0;
    std::map<int, int> paired_counts;
    for (const auto& row : data.surveys)
      if (row.answers) {
        ++paired;
        ++paired_counts[*row.label];
      }
    CHECK(paired == cfg.n_paired);
    for (int c = 0; c < 4; ++c) {
      const double target = cfg.n_paired * cfg.class_proportions[static_cast<std::size_t>(c)];
      CHECK(std::fabs(paired_counts[c] - target) <= 1.0);
    }
  }
  SECTION("every class is present among unpaired consumers") {
    std::set<int> classes;
    for (const auto& row : data.surveys)
      if (!row.answers) classes.insert(*row.label);
    CHECK(classes.size() == 4);
  }
  SECTION("identical seeds produce identical files") {
    const SynthData again = synthesize(cfg);
    std::ostringstream a1, a2, b1, b2;
    write_transactions_csv(a1, data.transactions);
    write_transactions_csv(a2, again.transactions);
    write_surveys_csv(b1, data.surveys);
    write_surveys_csv(b2, again.surveys);
    CHECK(a1.str() == a2.str());
    CHECK(b1.str() == b2.str());
  }
  SECTION("different seeds differ") {
    SynthConfig other = cfg;
    other.seed = cfg.seed + 1;
    const SynthData again = synthesize(other);
    std::ostringstream b1, b2;
    write_surveys_csv(b1, data.surveys);
    write_surveys_csv(b2, again.surveys);
    CHECK(b1.str() != b2.str());
  }
}

TEST_CASE("planted collisions are recoverable", "[synthgen]") {
  const SynthConfig cfg = small_config();
  const SynthData data = synthesize(cfg);
  REQUIRE(data.planted_collisions.size() == static_cast<std::size_t>(cfg.collision_count));

  std::vector<LabeledSurvey> surveys;
  for (const auto& row : data.surveys)
    if (row.answers) surveys.push_back({row.consumer_id, *row.answers, *row.label});
  const auto rep = multivalued_report(surveys, 0.95);
  CHECK(rep.flagged_count >= 2 * cfg.collision_count);
  for (const auto& [a, b] : data.planted_collisions) {
    CHECK(std::find(rep.flagged_ids.begin(), rep.flagged_ids.end(), a) != rep.flagged_ids.end());
    CHECK(std::find(rep.flagged_ids.begin(), rep.flagged_ids.end(), b) != rep.flagged_ids.end());
  }
}

TEST_CASE("generated csvs pass ingestion end to end", "[synthgen]") {
  const SynthConfig cfg = small_config();
  const SynthData data = synthesize(cfg);

  std::ostringstream tr_out, sv_out;
  write_transactions_csv(tr_out, data.transactions);
  write_surveys_csv(sv_out, data.surveys);
  std::istringstream tr_in(tr_out.str()), sv_in(sv_out.str());
  const auto transactions = read_transactions_csv(tr_in);
  const auto surveys = read_surveys_csv(sv_in);
  const auto fx = extract_features(transactions, CategoryScheme::default_scheme());
  const Dataset ds = assemble_dataset(fx, surveys);

  CHECK(ds.survey_without_activity.empty());
  CHECK(static_cast<int>(ds.paired_indices().size()) == cfg.n_paired);
  CHECK(ds.consumers.size() == static_cast<std::size_t>(cfg.n_total));
  for (const auto& c : ds.consumers) {
    for (double v : c.u) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(c.labeled());
  }
}

TEST_CASE("full signal with no collisions is linearly recoverable", "[synthgen]") {
  SynthConfig cfg = small_config();
  cfg.signal_strength = 1.0;
  cfg.collision_count = 0;
  cfg.n_total = 800;
  cfg.n_paired = 240;
  const SynthData data = synthesize(cfg);

  const auto fx = extract_features(data.transactions, CategoryScheme::default_scheme());
  const Dataset ds = assemble_dataset(fx, data.surveys);
  const SplitIndices split = split_paired(ds, 0.3, 1);
  const PreparedData prep = prepare_experiment(ds, split);
  const MetricsReport rep = run_baseline_once(prep);
  CHECK(rep.accuracy > 0.9);
}

TEST_CASE("zero signal leaves classifiers at the majority rate", "[synthgen]") {
  SynthConfig cfg = small_config();
  cfg.signal_strength = 0.0;
  cfg.collision_count = 0;
  cfg.n_total = 1000;
  cfg.n_paired = 300;
  const SynthData data = synthesize(cfg);
  const auto fx = extract_features(data.transactions, CategoryScheme::default_scheme());
  const Dataset ds = assemble_dataset(fx, data.surveys);
  const SplitIndices split = split_paired(ds, 0.3, 1);
  const PreparedData prep = prepare_experiment(ds, split);
  const MetricsReport rep = run_baseline_once(prep);
  // Majority class holds ~46% of the population; without signal the
  // classifier cannot beat that by much.
  CHECK(rep.accuracy < 0.56);
}
