// Command-line front end: synthesize data, featurize, train, evaluate,
// analyze, and reproduce the full desk-scale comparison.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "adgan/checkpoint.hpp"
#include "adgan/common.hpp"
#include "adgan/dataset.hpp"
#include "adgan/experiment.hpp"
#include "adgan/features.hpp"
#include "adgan/metrics.hpp"
#include "adgan/model.hpp"
#include "adgan/synthgen.hpp"
#include "adgan/trainer.hpp"

namespace fs = std::filesystem;
using namespace adgan;

namespace {

std::string default_out_dir() {
  const char* env = std::getenv("ADGAN_OUT");
  return env != nullptr && *env != '\0' ? env : ".";
}

// Provenance header carried by every numeric output file.
std::string provenance(std::uint64_t seed, const std::string& config_text) {
  return "# seed=" + std::to_string(seed) + "\n# config=" + to_hex(fnv1a(config_text)) + "\n";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
}

struct LoadedData {
  Dataset dataset;
  std::vector<TransactionRecord> transactions;
  std::vector<SurveyRow> surveys;
};

LoadedData load_data_dir(const std::string& dir, const std::string& scheme_path) {
  const CategoryScheme scheme =
      scheme_path.empty() ? CategoryScheme::default_scheme() : CategoryScheme::load(scheme_path);
  LoadedData out;
  {
    std::ifstream in(dir + "/transactions.csv");
    if (!in) throw ValidationError("cannot open " + dir + "/transactions.csv");
    out.transactions = read_transactions_csv(in);
  }
  {
    std::ifstream in(dir + "/surveys.csv");
    if (!in) throw ValidationError("cannot open " + dir + "/surveys.csv");
    out.surveys = read_surveys_csv(in);
  }
  out.dataset = assemble_dataset(extract_features(out.transactions, scheme), out.surveys);
  for (const auto& id : out.dataset.survey_without_activity)
    std::cerr << "warning: survey without activity for consumer " << id << "\n";
  return out;
}

std::string metrics_line(const std::string& name, const AggregateMetrics& agg) {
  std::ostringstream out;
  out << name;
  for (std::size_t c = 0; c < agg.mean.f1_per_class.size(); ++c)
    out << ',' << format_mean_std(agg.mean.f1_per_class[c], agg.stddev.f1_per_class[c]);
  out << ',' << format_mean_std(agg.mean.macro_precision, agg.stddev.macro_precision);
  out << ',' << format_mean_std(agg.mean.macro_recall, agg.stddev.macro_recall);
  out << ',' << format_mean_std(agg.mean.macro_f1, agg.stddev.macro_f1);
  out << ',' << format_mean_std(agg.mean.accuracy, agg.stddev.accuracy);
  return out.str();
}

std::string render_metrics(const MetricsReport& rep, const std::string& format) {
  if (format == "json-lines") {
    nlohmann::json j{{"f1_per_class", rep.f1_per_class},
                     {"macro_precision", rep.macro_precision},
                     {"macro_recall", rep.macro_recall},
                     {"macro_f1", rep.macro_f1},
                     {"accuracy", rep.accuracy}};
    return j.dump() + "\n";
  }
  std::ostringstream out;
  if (format == "csv") {
    out << "metric,value\n";
    for (std::size_t c = 0; c < rep.f1_per_class.size(); ++c)
      out << c << "-f1," << rep.f1_per_class[c] << "\n";
    out << "macro_precision," << rep.macro_precision << "\n";
    out << "macro_recall," << rep.macro_recall << "\n";
    out << "macro_f1," << rep.macro_f1 << "\n";
    out << "accuracy," << rep.accuracy << "\n";
    return out.str();
  }
  char buf[160];
  out << "metric            value\n";
  for (std::size_t c = 0; c < rep.f1_per_class.size(); ++c) {
    std::snprintf(buf, sizeof buf, "%zu-f1            %8.5f\n", c, rep.f1_per_class[c]);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "macro precision  %8.5f\n", rep.macro_precision);
  out << buf;
  std::snprintf(buf, sizeof buf, "macro recall     %8.5f\n", rep.macro_recall);
  out << buf;
  std::snprintf(buf, sizeof buf, "macro f1         %8.5f\n", rep.macro_f1);
  out << buf;
  std::snprintf(buf, sizeof buf, "accuracy         %8.5f\n", rep.accuracy);
  out << buf;
  return out.str();
}

int run_cli(CLI::App& app, int argc, char** argv) {
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "generate a synthetic two-domain dataset");
  std::string synth_preset = "desk";
  std::uint64_t synth_seed = 1;
  std::string synth_out = default_out_dir();
  double synth_signal = -1.0;
  int synth_total = -1, synth_paired = -1, synth_collisions = -1;
  synth->add_option("--preset", synth_preset, "desk (the only data preset)")
      ->check(CLI::IsMember({"desk"}));
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--signal", synth_signal, "override signal strength");
  synth->add_option("--n-total", synth_total, "override total consumer count");
  synth->add_option("--n-paired", synth_paired, "override surveyed consumer count");
  synth->add_option("--collisions", synth_collisions, "override planted collision pairs");

  // ---- featurize ----
  auto* feat = app.add_subcommand("featurize", "extract consumer-model and survey features");
  std::string feat_data, feat_scheme, feat_out = default_out_dir();
  feat->add_option("--data", feat_data, "directory with transactions.csv and surveys.csv")
      ->required();
  feat->add_option("--scheme", feat_scheme, "category-scheme config file");
  feat->add_option("--out", feat_out, "output directory");

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "train the model on a dataset directory");
  std::string train_data, train_scheme, train_config, train_preset = "desk";
  std::string train_strategy, train_out = default_out_dir(), train_arch = "view";
  std::optional<std::uint64_t> train_seed;
  double train_test_fraction = 0.3;
  std::uint64_t train_split_seed = 42;
  std::optional<int> train_step;
  train_cmd->add_option("--data", train_data, "dataset directory")->required();
  train_cmd->add_option("--scheme", train_scheme, "category-scheme config file");
  train_cmd->add_option("--config", train_config, "training config file");
  train_cmd->add_option("--preset", train_preset, "desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  train_cmd->add_option("--strategy", train_strategy, "random, over or under")
      ->check(CLI::IsMember({"random", "over", "oversample", "under", "undersample"}));
  train_cmd->add_option("--seed", train_seed, "training seed override");
  train_cmd->add_option("--step", train_step, "epoch count override");
  train_cmd->add_option("--out", train_out, "output directory");
  train_cmd->add_option("--arch", train_arch, "view (structural embeddings) or flat")
      ->check(CLI::IsMember({"view", "flat"}));
  train_cmd->add_option("--test-fraction", train_test_fraction, "held-out fraction of pairs");
  train_cmd->add_option("--split-seed", train_split_seed, "train/test split seed");

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the held-out pairs");
  std::string eval_ckpt, eval_data, eval_scheme, eval_out = default_out_dir();
  std::string eval_format = "table";
  double eval_test_fraction = 0.3;
  std::uint64_t eval_split_seed = 42;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
  eval_cmd->add_option("--scheme", eval_scheme, "category-scheme config file");
  eval_cmd->add_option("--format", eval_format, "csv, table or json-lines")
      ->check(CLI::IsMember({"csv", "table", "json-lines"}));
  eval_cmd->add_option("--out", eval_out, "output directory");
  eval_cmd->add_option("--test-fraction", eval_test_fraction, "held-out fraction of pairs");
  eval_cmd->add_option("--split-seed", eval_split_seed, "train/test split seed");

  // ---- analyze ----
  auto* analyze = app.add_subcommand("analyze", "empirical analysis reports");
  std::string an_data, an_scheme, an_out = default_out_dir();
  double an_threshold = 0.95;
  analyze->add_option("--data", an_data, "dataset directory")->required();
  analyze->add_option("--scheme", an_scheme, "category-scheme config file");
  analyze->add_option("--out", an_out, "output directory");
  analyze->add_option("--threshold", an_threshold, "multivalued similarity threshold");

  // ---- reproduce ----
  auto* rep = app.add_subcommand("reproduce", "full desk-scale pipeline and comparison table");
  std::string rep_out = default_out_dir();
  std::uint64_t rep_seed = 7;
  int rep_runs = 10, rep_jobs = 2, rep_step = 1000;
  rep->add_option("--out", rep_out, "output directory");
  rep->add_option("--seed", rep_seed, "master seed");
  rep->add_option("--runs", rep_runs, "runs per variant");
  rep->add_option("--jobs", rep_jobs, "parallel runs");
  rep->add_option("--step", rep_step, "epochs per run");

  app.parse(argc, argv);

  if (*synth) {
    SynthConfig cfg = default_desk_preset();
    cfg.seed = synth_seed;
    if (synth_signal >= 0.0) cfg.signal_strength = synth_signal;
    if (synth_total > 0) cfg.n_total = synth_total;
    if (synth_paired >= 0) cfg.n_paired = synth_paired;
    if (synth_collisions >= 0) cfg.collision_count = synth_collisions;
    cfg.validate();
    fs::create_directories(synth_out);
    const SynthData data = synthesize(cfg);
    write_synth_data(data, synth_out, provenance(cfg.seed, cfg.describe()));
    std::cout << "wrote " << synth_out << "/transactions.csv (" << data.transactions.size()
              << " records) and surveys.csv (" << data.surveys.size() << " rows)\n";
    return 0;
  }

  if (*feat) {
    const LoadedData data = load_data_dir(feat_data, feat_scheme);
    fs::create_directories(feat_out);
    const std::string prov = provenance(0, "featurize:" + feat_data);

    std::ostringstream u_out;
    u_out << prov << "consumer_id";
    for (int i = 0; i < 20; ++i) u_out << ",u" << i;
    u_out << ",zero_stratum\n";
    for (const auto& c : data.dataset.consumers) {
      u_out << c.id;
      for (double v : c.u) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        u_out << ',' << buf;
      }
      u_out << ',' << (c.zero_stratum ? 1 : 0) << '\n';
    }
    write_text(fs::path(feat_out) / "u_features.csv", u_out.str());

    // Compressed surveys; statistics fitted over every surveyed consumer
    // here (the training pipeline refits on its own training split).
    std::vector<std::array<int, kSurveyQuestions>> answers;
    for (const auto& c : data.dataset.consumers)
      if (c.survey) answers.push_back(*c.survey);
    if (!answers.empty()) {
      const SurveyStats stats = fit_survey_stats(answers);
      std::ostringstream s_out;
      s_out << prov << "consumer_id";
      for (int q = 1; q <= kSurveyQuestions; ++q) s_out << ",c" << q;
      s_out << ",frt_label\n";
      for (const auto& c : data.dataset.consumers) {
        if (!c.survey) continue;
        s_out << c.id;
        const auto z = compress_survey(*c.survey, stats);
        for (double v : z) {
          char buf[40];
          std::snprintf(buf, sizeof buf, "%.17g", v);
          s_out << ',' << buf;
        }
        s_out << ',';
        if (c.label >= 0) s_out << c.label;
        s_out << '\n';
      }
      write_text(fs::path(feat_out) / "survey_features.csv", s_out.str());

      std::ostringstream st_out;
      st_out << prov << "question,mu,sigma\n";
      for (int q = 0; q < kSurveyQuestions; ++q) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "q%d,%.17g,%.17g\n", q + 1,
                      stats.mu[static_cast<std::size_t>(q)],
                      stats.sigma[static_cast<std::size_t>(q)]);
        st_out << buf;
      }
      write_text(fs::path(feat_out) / "survey_stats.csv", st_out.str());
    }

    const GroupReport group = group_analysis(data.transactions);
    std::ostringstream g_out;
    g_out << prov << "group,consumers,total_expense\n";
    for (std::size_t g = 0; g < group.groups.size(); ++g) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g\n", g + 1, group.groups[g].size(),
                    group.total_expense[g]);
      g_out << buf;
    }
    write_text(fs::path(feat_out) / "group_report.csv", g_out.str());
    std::cout << "wrote u_features.csv, survey_features.csv, survey_stats.csv, group_report.csv"
              << " to " << feat_out << "\n";
    return 0;
  }

  if (*train_cmd) {
    TrainConfig cfg =
        train_preset == "paper" ? TrainConfig::paper_preset() : TrainConfig::desk_preset();
    if (!train_config.empty()) cfg = TrainConfig::load(train_config);
    if (!train_strategy.empty()) cfg.strategy = parse_strategy(train_strategy);
    if (train_seed) cfg.seed = *train_seed;
    if (train_step) cfg.step = *train_step;
    cfg.validate();

    ArchConfig arch;
    arch.flat_embedding = train_arch == "flat";
    const LoadedData data = load_data_dir(train_data, train_scheme);
    const SplitIndices split = split_paired(data.dataset, train_test_fraction, train_split_seed);
    const PreparedData prep = prepare_experiment(data.dataset, split);

    auto [params, log] = train(prep.train, cfg, arch);
    fs::create_directories(train_out);
    save_checkpoint((fs::path(train_out) / "model.ckpt").string(), params, arch,
                    prep.train.stats);
    std::ostringstream log_out;
    log_out << provenance(cfg.seed, cfg.serialize());
    log.write_csv(log_out);
    write_text(fs::path(train_out) / "train_log.csv", log_out.str());
    std::cout << "trained " << cfg.step << " epochs (" << log.d_updates
              << " discriminator updates); checkpoint at " << train_out << "/model.ckpt\n";
    return 0;
  }

  if (*eval_cmd) {
    const Checkpoint ck = load_checkpoint(eval_ckpt);
    const LoadedData data = load_data_dir(eval_data, eval_scheme);
    const SplitIndices split = split_paired(data.dataset, eval_test_fraction, eval_split_seed);

    // Test pairs compressed with the checkpoint's training-time statistics.
    Matrix u(static_cast<int>(split.test.size()), ck.arch.u_dim);
    Matrix s(static_cast<int>(split.test.size()), ck.arch.survey_dim);
    std::vector<int> y;
    for (std::size_t i = 0; i < split.test.size(); ++i) {
      const auto& c = data.dataset.consumers[static_cast<std::size_t>(split.test[i])];
      for (int j = 0; j < ck.arch.u_dim; ++j)
        u.at(static_cast<int>(i), j) = c.u[static_cast<std::size_t>(j)];
      const auto z = compress_survey(*c.survey, ck.stats);
      for (int j = 0; j < ck.arch.survey_dim; ++j)
        s.at(static_cast<int>(i), j) = z[static_cast<std::size_t>(j)];
      y.push_back(c.label);
    }
    const MetricsReport rep = compute_metrics(classify(ck.params, ck.arch, u, s, y));
    const std::string text = render_metrics(rep, eval_format);
    std::cout << text;
    fs::create_directories(eval_out);
    write_text(fs::path(eval_out) / ("metrics." + eval_format),
               provenance(eval_split_seed, eval_ckpt) + text);
    return 0;
  }

  if (*analyze) {
    const LoadedData data = load_data_dir(an_data, an_scheme);
    fs::create_directories(an_out);
    const std::string prov = provenance(0, "analyze:" + an_data);

    const GroupReport group = group_analysis(data.transactions);
    std::ostringstream curve;
    curve << prov << "group,total_expense\n";
    for (std::size_t g = 0; g < group.total_expense.size(); ++g) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%zu,%.17g\n", g + 1, group.total_expense[g]);
      curve << buf;
    }
    write_text(fs::path(an_out) / "group_expense.csv", curve.str());

    std::ostringstream om;
    om << prov << "group";
    for (int b = 0; b < group.overlap.cols(); ++b) om << ",g" << b + 1;
    om << '\n';
    for (int a = 0; a < group.overlap.rows(); ++a) {
      om << 'g' << a + 1;
      for (int b = 0; b < group.overlap.cols(); ++b) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", group.overlap.at(a, b));
        om << ',' << buf;
      }
      om << '\n';
    }
    write_text(fs::path(an_out) / "group_overlap.csv", om.str());

    // Stratum and life score summaries over the population.
    const CategoryScheme scheme =
        an_scheme.empty() ? CategoryScheme::default_scheme() : CategoryScheme::load(an_scheme);
    std::ostringstream fsum;
    fsum << prov << "dimension,kind,mean,max\n";
    {
      std::array<double, 20> mean{};
      std::array<double, 20> mx{};
      for (const auto& c : data.dataset.consumers) {
        for (int j = 0; j < 20; ++j) {
          mean[static_cast<std::size_t>(j)] += c.u[static_cast<std::size_t>(j)];
          mx[static_cast<std::size_t>(j)] =
              std::max(mx[static_cast<std::size_t>(j)], c.u[static_cast<std::size_t>(j)]);
        }
      }
      for (int j = 0; j < 20; ++j) {
        const bool stratum = j < kStratumDims;
        const std::string name =
            stratum ? scheme.stratum_label(j) : scheme.life_label(j - kStratumDims);
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6f\n", name.c_str(),
                      stratum ? "stratum" : "life",
                      mean[static_cast<std::size_t>(j)] / data.dataset.consumers.size(),
                      mx[static_cast<std::size_t>(j)]);
        fsum << buf;
      }
    }
    write_text(fs::path(an_out) / "feature_summary.csv", fsum.str());

    std::vector<LabeledSurvey> surveys;
    for (const auto& c : data.dataset.consumers)
      if (c.survey && c.labeled()) surveys.push_back({c.id, *c.survey, c.label});
    const MultivaluedReport mv = multivalued_report(surveys, an_threshold);
    std::ostringstream mv_out;
    mv_out << prov << "threshold,flagged_count\n"
           << an_threshold << ',' << mv.flagged_count << "\nconsumer_id\n";
    for (const auto& id : mv.flagged_ids) mv_out << id << '\n';
    write_text(fs::path(an_out) / "multivalued.csv", mv_out.str());

    std::cout << "multivalued consumers at threshold " << an_threshold << ": "
              << mv.flagged_count << "\n"
              << "wrote group_expense.csv, group_overlap.csv, feature_summary.csv, "
                 "multivalued.csv to "
              << an_out << "\n";
    return 0;
  }

  if (*rep) {
    fs::create_directories(rep_out);
    SynthConfig scfg = default_desk_preset();
    scfg.seed = rep_seed;
    const SynthData data = synthesize(scfg);
    write_synth_data(data, rep_out, provenance(scfg.seed, scfg.describe()));

    const auto fx = extract_features(data.transactions, CategoryScheme::default_scheme());
    const Dataset ds = assemble_dataset(fx, data.surveys);
    const SplitIndices split = split_paired(ds, 0.3, rep_seed);
    const PreparedData prep = prepare_experiment(ds, split);

    std::vector<VariantRow> rows;
    {
      std::vector<MetricsReport> base_runs;
      for (int r = 0; r < rep_runs; ++r) base_runs.push_back(run_baseline_once(prep));
      rows.push_back({"baseline_lr", aggregate_runs(base_runs)});
    }
    const struct {
      const char* name;
      SamplingStrategy strategy;
    } variants[] = {{"RADGAN", SamplingStrategy::kRandom},
                    {"UADGAN", SamplingStrategy::kUndersample},
                    {"OADGAN", SamplingStrategy::kOversample}};
    ArchConfig arch;
    for (const auto& v : variants) {
      TrainConfig cfg = TrainConfig::desk_preset();
      cfg.step = rep_step;
      cfg.strategy = v.strategy;
      cfg.seed = rep_seed * 31 + 1;
      rows.push_back({v.name, run_adgan_suite(prep, cfg, arch, rep_runs, rep_jobs)});
      std::cerr << metrics_line(v.name, rows.back().agg) << "\n";
    }
    const std::string table = format_comparison_table(rows);
    write_text(fs::path(rep_out) / "comparison.csv", provenance(rep_seed, "reproduce") + table);
    std::cout << table;
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Asymmetric cross-domain GAN for risk-tolerance classification"};
  try {
    return run_cli(app, argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
