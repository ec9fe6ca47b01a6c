#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "adgan/checkpoint.hpp"
#include "adgan/model.hpp"
#include "adgan/rng.hpp"
#include "adgan/trainer.hpp"

using namespace adgan;

namespace {

ArchConfig tiny_arch() {
  ArchConfig a;
  a.survey_dim = 6;
  a.survey_group_sizes = {2, 2, 2};
  a.group_hidden = 3;
  a.combined_hidden = 4;
  a.trunk_hidden = 4;
  return a;
}

TrainData tiny_data(const ArchConfig& arch) {
  Rng rng(555);
  TrainData data;
  const int nf = 24, nl = 40;
  data.u_paired = Matrix(nf, arch.u_dim);
  data.s_paired = Matrix(nf, arch.survey_dim);
  for (std::size_t i = 0; i < data.u_paired.size(); ++i)
    data.u_paired.data()[i] = rng.uniform(0.0, 1.0);
  for (std::size_t i = 0; i < data.s_paired.size(); ++i)
    data.s_paired.data()[i] = rng.uniform(0.05, 0.95);
  for (int i = 0; i < nf; ++i) data.labels_paired.push_back(i % 4);
  data.u_unpaired = Matrix(nl, arch.u_dim);
  for (std::size_t i = 0; i < data.u_unpaired.size(); ++i)
    data.u_unpaired.data()[i] = rng.uniform(0.0, 1.0);
  for (int i = 0; i < nl; ++i) data.labels_unpaired.push_back(i % 4);
  data.stats.mu.fill(4.0);
  data.stats.sigma.fill(1.0);
  return data;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.step = 1;
  cfg.size = 8;
  cfg.i_d = 3;
  cfg.seed = 77;
  cfg.c = 2;
  return cfg;
}

std::string log_csv(const TrainLog& log) {
  std::ostringstream out;
  log.write_csv(out);
  return out.str();
}

}  // namespace

TEST_CASE("presets carry the published defaults", "[trainer]") {
  const TrainConfig paper = TrainConfig::paper_preset();
  CHECK(paper.step == 4000);
  CHECK(paper.i_d == 20);
  CHECK(paper.size == 64);
  CHECK(paper.c == 5);
  CHECK(paper.mu == 0.0);
  CHECK(paper.sigma == 0.01);
  CHECK(paper.lr_d == 1e-4);
  CHECK(paper.lr_gd == 1e-3);
  CHECK(paper.beta1 == 0.5);
  CHECK(paper.beta2 == 0.9);
  CHECK(paper.lambda == 10.0);
  CHECK(paper.strategy == SamplingStrategy::kOversample);
  const TrainConfig desk = TrainConfig::desk_preset();
  CHECK(desk.step == 1000);
  CHECK(desk.i_d == 20);
}

TEST_CASE("config files mirror the field names exactly", "[trainer]") {
  const TrainConfig cfg = TrainConfig::paper_preset();
  const std::string text = cfg.serialize();
  CHECK(text.find("Step = 4000") != std::string::npos);
  CHECK(text.find("I_d = 20") != std::string::npos);
  CHECK(text.find("lr_D = ") != std::string::npos);
  CHECK(text.find("lr_GD = ") != std::string::npos);
  CHECK(text.find("strategy = oversample") != std::string::npos);

  std::istringstream in(text);
  const TrainConfig back = TrainConfig::parse(in);
  CHECK(back.serialize() == text);
  CHECK(back.hash() == cfg.hash());

  std::istringstream bad1("Step = 10\nwhatever = 3\n");
  CHECK_THROWS_AS(TrainConfig::parse(bad1), ValidationError);
  std::istringstream bad2("Step = banana\n");
  CHECK_THROWS_AS(TrainConfig::parse(bad2), ValidationError);
  std::istringstream bad3("Step = 0\n");
  CHECK_THROWS_AS(TrainConfig::parse(bad3), ValidationError);
}

TEST_CASE("one epoch runs the pseudocode update counts", "[trainer]") {
  const ArchConfig arch = tiny_arch();
  const TrainData data = tiny_data(arch);
  TrainConfig cfg = tiny_config();
  cfg.i_d = 20;
  const auto [params, log] = train(data, cfg, arch);
  CHECK(log.d_updates == 20);
  CHECK(log.g_updates == 1);
  CHECK(log.align_updates == 1);
  CHECK(log.epochs.size() == 1);
  CHECK(log.epochs[0].weight_w > 0.0);
  CHECK(log.header.find("I_d = 20") != std::string::npos);
}

TEST_CASE("update counters scale with epochs", "[trainer]") {
  const ArchConfig arch = tiny_arch();
  const TrainData data = tiny_data(arch);
  TrainConfig cfg = tiny_config();
  cfg.step = 4;
  const auto [params, log] = train(data, cfg, arch);
  CHECK(log.d_updates == 4l * cfg.i_d);
  CHECK(log.g_updates == 4);
  CHECK(log.epochs.size() == 4);
}

TEST_CASE("training is bit-deterministic in the seed", "[trainer]") {
  const ArchConfig arch = tiny_arch();
  const TrainData data = tiny_data(arch);
  TrainConfig cfg = tiny_config();
  cfg.step = 3;
  const auto [p1, l1] = train(data, cfg, arch);
  const auto [p2, l2] = train(data, cfg, arch);
  CHECK(p1.hash_all() == p2.hash_all());
  CHECK(log_csv(l1) == log_csv(l2));

  cfg.seed = 78;
  const auto [p3, l3] = train(data, cfg, arch);
  CHECK(p1.hash_all() != p3.hash_all());
}

TEST_CASE("updates respect the parameter partition", "[trainer]") {
  const ArchConfig arch = tiny_arch();
  Rng rng(91);
  ParameterSet params = init_parameters(arch, rng);
  Rng ur(92);
  Matrix u(6, arch.u_dim), s(6, arch.survey_dim);
  for (std::size_t i = 0; i < u.size(); ++i) u.data()[i] = ur.uniform(0.0, 1.0);
  for (std::size_t i = 0; i < s.size(); ++i) s.data()[i] = ur.uniform(0.1, 0.9);
  const std::vector<int> labels = {0, 1, 2, 3, 0, 1};

  SECTION("a discriminator step changes no generator parameter") {
    const auto gen_names = generator_param_names(arch);
    const std::uint64_t before = params.hash(gen_names);
    BuiltLoss loss = build_loss_d(params, arch, u, s, labels, 10.0);
    AdamState adam(1e-3, 0.5, 0.9);
    adam.step(params, loss_gradients(loss));
    CHECK(params.hash(gen_names) == before);
    CHECK(params.hash(discriminator_param_names(arch)) != 0);
  }
  SECTION("a generator/alignment step changes nothing outside theta and d_align") {
    const std::vector<std::string> untouched = {"disc.critic.w", "disc.critic.b",
                                                "disc.u_view.g0.w", "disc.u_view.g0.b",
                                                "disc.u_view.g1.w", "disc.u_view.g1.b",
                                                "disc.u_view.comb.w", "disc.u_view.comb.b"};
    const std::uint64_t before = params.hash(untouched);
    BuiltLoss loss = build_loss_g_dalign(params, arch, u, labels, u, s, labels);
    AdamState adam(1e-3, 0.5, 0.9);
    adam.step(params, loss_gradients(loss));
    CHECK(params.hash(untouched) == before);
  }
}

TEST_CASE("non-finite losses abort with epoch diagnostics", "[trainer]") {
  const ArchConfig arch = tiny_arch();
  const TrainData data = tiny_data(arch);
  TrainConfig cfg = tiny_config();
  cfg.step = 5;
  cfg.lr_d = 1e160;  // Adam moves about lr per step: parameters overflow fast
  try {
    train(data, cfg, arch);
    FAIL("expected a NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("checkpoints round-trip exactly", "[trainer]") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "adgan_ckpt_test";
  fs::create_directories(dir);
  const std::string path = (dir / "model.ckpt").string();

  const ArchConfig arch = tiny_arch();
  Rng rng(101);
  ParameterSet params = init_parameters(arch, rng);
  SurveyStats stats;
  for (int q = 0; q < kSurveyQuestions; ++q) {
    stats.mu[static_cast<std::size_t>(q)] = rng.uniform(1.0, 7.0);
    stats.sigma[static_cast<std::size_t>(q)] = rng.uniform(0.1, 2.0);
  }

  SECTION("save, load, save is byte identical and values survive exactly") {
    save_checkpoint(path, params, arch, stats);
    const Checkpoint ck = load_checkpoint(path);
    CHECK(ck.params.hash_all() == params.hash_all());
    CHECK(ck.stats.mu == stats.mu);
    CHECK(ck.stats.sigma == stats.sigma);
    CHECK(ck.arch.survey_dim == arch.survey_dim);

    const std::string path2 = (dir / "model2.ckpt").string();
    save_checkpoint(path2, ck.params, ck.arch, ck.stats);
    std::ifstream f1(path), f2(path2);
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    CHECK(s1.str() == s2.str());
  }
  SECTION("a loaded checkpoint reproduces inference exactly") {
    save_checkpoint(path, params, arch, stats);
    const Checkpoint ck = load_checkpoint(path);
    Rng ur(102);
    Matrix u(4, arch.u_dim);
    for (std::size_t i = 0; i < u.size(); ++i) u.data()[i] = ur.uniform(0.0, 1.0);
    CHECK(generate(ck.params, ck.arch, u) == generate(params, arch, u));
  }
  SECTION("a truncated checkpoint is a schema error, not a crash") {
    save_checkpoint(path, params, arch, stats);
    std::ifstream in(path);
    std::stringstream whole;
    whole << in.rdbuf();
    const std::string text = whole.str();
    std::ofstream out(path, std::ios::trunc);
    out << text.substr(0, text.size() / 2);
    out.close();
    CHECK_THROWS_AS(load_checkpoint(path), ValidationError);
  }
  SECTION("a missing file is a clean error") {
    CHECK_THROWS_AS(load_checkpoint((dir / "absent.ckpt").string()), ValidationError);
  }
}
