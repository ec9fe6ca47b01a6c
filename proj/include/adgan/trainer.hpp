#pragma once

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "adgan/adam.hpp"
#include "adgan/batching.hpp"
#include "adgan/common.hpp"
#include "adgan/model.hpp"
#include "adgan/rng.hpp"

namespace adgan {

// Training hyperparameters. The config-file keys mirror these field names
// exactly (Step, size, I_d, lambda, beta1, beta2, lr_D, lr_GD, mu, sigma,
// c, strategy, seed).
struct TrainConfig {
  int step = 4000;  // max epochs
  int size = 64;
  int i_d = 20;  // discriminator iterations per epoch
  double lambda = 10.0;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double lr_d = 1e-4;
  double lr_gd = 1e-3;
  double mu = 0.0;
  double sigma = 0.01;
  int c = 5;
  SamplingStrategy strategy = SamplingStrategy::kOversample;
  std::uint64_t seed = 1;

  void validate() const {
    if (step < 1) throw ValidationError("config: Step must be >= 1");
    if (size < 1) throw ValidationError("config: size must be >= 1");
    if (i_d < 1) throw ValidationError("config: I_d must be >= 1");
    if (lambda < 0.0) throw ValidationError("config: lambda must be >= 0");
    if (lr_d <= 0.0 || lr_gd <= 0.0) throw ValidationError("config: learning rates must be > 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
      throw ValidationError("config: betas must lie in [0, 1)");
    if (sigma < 0.0) throw ValidationError("config: sigma must be >= 0");
    if (c < 0) throw ValidationError("config: c must be >= 0");
  }

  // Experiment-protocol settings used for the reported runs.
  static TrainConfig paper_preset() { return TrainConfig{}; }

  // Desk-scale preset for the synthetic dataset: the protocol settings on a
  // shorter schedule.
  static TrainConfig desk_preset() {
    TrainConfig cfg;
    cfg.step = 1000;
    cfg.lr_d = 1e-3;
    cfg.lr_gd = 1e-4;
    cfg.sigma = 0.05;
    return cfg;
  }

  std::string serialize() const {
    std::ostringstream out;
    char buf[64];
    out << "Step = " << step << "\n";
    out << "size = " << size << "\n";
    out << "I_d = " << i_d << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", lambda);
    out << "lambda = " << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", beta1);
    out << "beta1 = " << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", beta2);
    out << "beta2 = " << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", lr_d);
    out << "lr_D = " << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", lr_gd);
    out << "lr_GD = " << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", mu);
    out << "mu = " << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", sigma);
    out << "sigma = " << buf << "\n";
    out << "c = " << c << "\n";
    out << "strategy = " << strategy_name(strategy) << "\n";
    out << "seed = " << seed << "\n";
    return out.str();
  }

  static TrainConfig parse(std::istream& in) {
    TrainConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string t = trim(line.substr(0, line.find('#')));
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
      const std::string key = trim(t.substr(0, eq));
      const std::string value = trim(t.substr(eq + 1));
      try {
        if (key == "Step") cfg.step = std::stoi(value);
        else if (key == "size") cfg.size = std::stoi(value);
        else if (key == "I_d") cfg.i_d = std::stoi(value);
        else if (key == "lambda") cfg.lambda = std::stod(value);
        else if (key == "beta1") cfg.beta1 = std::stod(value);
        else if (key == "beta2") cfg.beta2 = std::stod(value);
        else if (key == "lr_D") cfg.lr_d = std::stod(value);
        else if (key == "lr_GD") cfg.lr_gd = std::stod(value);
        else if (key == "mu") cfg.mu = std::stod(value);
        else if (key == "sigma") cfg.sigma = std::stod(value);
        else if (key == "c") cfg.c = std::stoi(value);
        else if (key == "strategy") cfg.strategy = parse_strategy(value);
        else if (key == "seed") cfg.seed = std::stoull(value);
        else throw ValidationError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
      } catch (const ValidationError&) {
        throw;
      } catch (const std::exception&) {
        throw ValidationError("config line " + std::to_string(line_no) + ": bad value '" + value + "'");
      }
    }
    cfg.validate();
    return cfg;
  }

  static TrainConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config: " + path);
    return parse(in);
  }

  std::uint64_t hash() const { return fnv1a(serialize()); }
};

// Everything the training loop consumes, already featurized and with the
// survey compression fitted on the training split only.
struct TrainData {
  Matrix u_paired;  // |E_f| x 20
  Matrix s_paired;  // compressed surveys, |E_f| x 52
  std::vector<int> labels_paired;
  Matrix u_unpaired;  // |E_l| x 20
  std::vector<int> labels_unpaired;
  SurveyStats stats;

  void validate() const {
    if (u_paired.rows() == 0 || u_unpaired.rows() == 0)
      throw ValidationError("train: both populations must be non-empty");
    if (u_paired.rows() != s_paired.rows() ||
        static_cast<std::size_t>(u_paired.rows()) != labels_paired.size() ||
        static_cast<std::size_t>(u_unpaired.rows()) != labels_unpaired.size())
      throw ValidationError("train: data pieces must align");
  }
};

struct EpochRecord {
  int epoch = 0;
  LossBreakdown d_loss;  // mean over the epoch's I_d discriminator steps
  double g_loss = 0.0;
  double weight_w = 0.0;
  int gp_zero_events = 0;
};

struct TrainLog {
  std::string header;  // key = value lines recording the effective config
  std::vector<EpochRecord> epochs;
  long d_updates = 0;
  long align_updates = 0;
  long g_updates = 0;
  long gp_degenerate_events = 0;
  double wall_ms = 0.0;

  void write_csv(std::ostream& out) const {
    std::istringstream hs(header);
    std::string line;
    while (std::getline(hs, line)) out << "# " << line << "\n";
    out << "epoch,d_total,d_wasserstein,d_gradient_penalty,d_ce_fake,d_ce_real,g_loss,W,gp_zero_events\n";
    char buf[256];
    for (const auto& e : epochs) {
      std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d\n", e.epoch,
                    e.d_loss.total, e.d_loss.wasserstein_term, e.d_loss.gradient_penalty_term,
                    e.d_loss.classification_fake, e.d_loss.classification_real, e.g_loss,
                    e.weight_w, e.gp_zero_events);
      out << buf;
    }
  }
};

// One full training run of the alternating procedure: per epoch, I_d
// discriminator steps on noise-fused B_a batches, then a single
// generator/D_align step on a mixed B_b batch. Updates are applied in
// pseudocode order: D_align first, then the generator, both at lr_GD.
inline std::pair<ParameterSet, TrainLog> train(const TrainData& data, const TrainConfig& cfg,
                                               const ArchConfig& arch) {
  cfg.validate();
  arch.validate();
  data.validate();

  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(cfg.seed);
  ParameterSet params = init_parameters(arch, rng);

  AdamState adam_d(cfg.lr_d, cfg.beta1, cfg.beta2);
  AdamState adam_align(cfg.lr_gd, cfg.beta1, cfg.beta2);
  AdamState adam_g(cfg.lr_gd, cfg.beta1, cfg.beta2);

  const auto gen_names = generator_param_names(arch);
  const auto align_names = d_align_param_names(arch);

  BatchASampler sampler_a(data.labels_paired, arch.n_classes, cfg.strategy, rng.fork(1));
  Rng batch_rng = rng.fork(2);

  const NoiseSpec u_noise{cfg.c, cfg.mu, cfg.sigma};
  u_noise.validate(arch.u_dim);
  const NoiseSpec s_noise{std::min(cfg.c, arch.survey_dim), cfg.mu, cfg.sigma};

  TrainLog log;
  log.header = cfg.serialize();

  for (int epoch = 1; epoch <= cfg.step; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    try {
      for (int iter = 0; iter < cfg.i_d; ++iter) {
        const auto batch = sampler_a.next(cfg.size);
        Matrix u(cfg.size, arch.u_dim);
        Matrix s(cfg.size, arch.survey_dim);
        std::vector<int> labels(batch.size());
        for (int i = 0; i < cfg.size; ++i) {
          const int row = batch[static_cast<std::size_t>(i)];
          for (int j = 0; j < arch.u_dim; ++j) u.at(i, j) = data.u_paired.at(row, j);
          gaussian_fuse(u.row(i), arch.u_dim, u_noise, batch_rng);
          for (int j = 0; j < arch.survey_dim; ++j) s.at(i, j) = data.s_paired.at(row, j);
          labels[static_cast<std::size_t>(i)] = data.labels_paired[static_cast<std::size_t>(row)];
        }
        // Noisy U drives both the generator and the discriminator's
        // consumer channel for this step; it is clamped back to [0, 1].
        u = clamp01(std::move(u));
        BuiltLoss loss = build_loss_d(params, arch, u, s, labels, cfg.lambda,
                                      arch.gp_at_interpolates ? &batch_rng : nullptr);
        adam_d.step(params, loss_gradients(loss));
        ++log.d_updates;
        rec.d_loss.wasserstein_term += loss.breakdown.wasserstein_term;
        rec.d_loss.gradient_penalty_term += loss.breakdown.gradient_penalty_term;
        rec.d_loss.classification_fake += loss.breakdown.classification_fake;
        rec.d_loss.classification_real += loss.breakdown.classification_real;
        rec.d_loss.total += loss.breakdown.total;
        if (loss.breakdown.gp_zero_rows > 0) {
          ++rec.gp_zero_events;
          ++log.gp_degenerate_events;
        }
      }
      rec.d_loss.wasserstein_term /= cfg.i_d;
      rec.d_loss.gradient_penalty_term /= cfg.i_d;
      rec.d_loss.classification_fake /= cfg.i_d;
      rec.d_loss.classification_real /= cfg.i_d;
      rec.d_loss.total /= cfg.i_d;

      const BatchB bb = sample_batch_b(data.labels_paired, data.labels_unpaired, cfg.size,
                                       arch.n_classes, batch_rng);
      Matrix u_l(static_cast<int>(bb.unpaired.size()), arch.u_dim);
      std::vector<int> labels_l(bb.unpaired.size());
      for (std::size_t i = 0; i < bb.unpaired.size(); ++i) {
        const int row = bb.unpaired[i];
        for (int j = 0; j < arch.u_dim; ++j) u_l.at(static_cast<int>(i), j) = data.u_unpaired.at(row, j);
        labels_l[i] = data.labels_unpaired[static_cast<std::size_t>(row)];
      }
      Matrix u_f(static_cast<int>(bb.paired.size()), arch.u_dim);
      Matrix s_f(static_cast<int>(bb.paired.size()), arch.survey_dim);
      std::vector<int> labels_f(bb.paired.size());
      for (std::size_t i = 0; i < bb.paired.size(); ++i) {
        const int row = bb.paired[i];
        for (int j = 0; j < arch.u_dim; ++j) u_f.at(static_cast<int>(i), j) = data.u_paired.at(row, j);
        for (int j = 0; j < arch.survey_dim; ++j) s_f.at(static_cast<int>(i), j) = data.s_paired.at(row, j);
        // Real surveys in the B_b path get the Gaussian fusion; generated
        // surveys are never noised.
        gaussian_fuse(s_f.row(static_cast<int>(i)), arch.survey_dim, s_noise, batch_rng);
        labels_f[i] = data.labels_paired[static_cast<std::size_t>(row)];
      }

      BuiltLoss gloss = build_loss_g_dalign(params, arch, u_l, labels_l, u_f, s_f, labels_f);
      auto grads = loss_gradients(gloss);
      std::vector<std::pair<std::string, Matrix>> align_grads, gen_grads;
      for (auto& [name, g] : grads) {
        if (name.rfind("gen.", 0) == 0)
          gen_grads.emplace_back(name, std::move(g));
        else
          align_grads.emplace_back(name, std::move(g));
      }
      adam_align.step(params, align_grads);
      ++log.align_updates;
      adam_g.step(params, gen_grads);
      ++log.g_updates;
      rec.g_loss = gloss.breakdown.total;
      rec.weight_w = gloss.weight_w;
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what());
    }
    log.epochs.push_back(rec);
  }

  log.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
  return {std::move(params), std::move(log)};
}

}  // namespace adgan
