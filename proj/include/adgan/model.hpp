#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "adgan/common.hpp"
#include "adgan/features.hpp"
#include "adgan/matrix.hpp"
#include "adgan/params.hpp"
#include "adgan/rng.hpp"
#include "adgan/tape.hpp"

namespace adgan {

// One dimension group of a structural view embedding: a subset of input
// indices encoded by its own FC+ReLU before the per-view combiner.
struct ViewGroupSpec {
  std::vector<int> indices;
  int hidden = 16;
};

struct ViewEmbeddingSpec {
  int input_dim = 0;
  std::vector<ViewGroupSpec> groups;
  int combined_hidden = 32;

  void validate() const {
    std::vector<bool> seen(static_cast<std::size_t>(input_dim), false);
    for (const auto& g : groups) {
      if (g.hidden < 1) throw ValidationError("view embedding: group width must be >= 1");
      if (g.indices.empty()) throw ValidationError("view embedding: empty dimension group");
      for (int i : g.indices) {
        if (i < 0 || i >= input_dim || seen[static_cast<std::size_t>(i)])
          throw ValidationError("view embedding: dimension groups must partition the input");
        seen[static_cast<std::size_t>(i)] = true;
      }
    }
    for (bool b : seen)
      if (!b) throw ValidationError("view embedding: dimension groups must cover the input");
    if (combined_hidden < 1) throw ValidationError("view embedding: combined width must be >= 1");
  }

  int concat_width() const {
    int w = 0;
    for (const auto& g : groups) w += g.hidden;
    return w;
  }
};

struct ArchConfig {
  int survey_dim = kSurveyQuestions;
  int u_dim = kStratumDims + kLifeDims;
  int n_classes = kFrtClasses;
  // Survey questions split into public-concern / collectivism /
  // innovativeness blocks; the exact membership is configurable because the
  // question-to-dimension assignment is not published.
  std::vector<int> survey_group_sizes{18, 17, 17};
  int group_hidden = 16;
  int combined_hidden = 32;
  int trunk_hidden = 32;
  bool critic_sigmoid = false;    // paper-literal survey-discriminator activation
  bool gp_at_interpolates = false;  // standard WGAN-GP interpolates instead of fakes
  bool flat_embedding = false;      // ablation: single FC group, no view structure

  void validate() const {
    if (std::accumulate(survey_group_sizes.begin(), survey_group_sizes.end(), 0) != survey_dim)
      throw ValidationError("arch: survey group sizes must sum to the survey dimension");
    survey_view().validate();
    u_view().validate();
    if (trunk_hidden < 1) throw ValidationError("arch: trunk width must be >= 1");
  }

  ViewEmbeddingSpec survey_view() const {
    ViewEmbeddingSpec spec;
    spec.input_dim = survey_dim;
    spec.combined_hidden = combined_hidden;
    if (flat_embedding) {
      ViewGroupSpec g;
      g.hidden = group_hidden;
      g.indices.resize(static_cast<std::size_t>(survey_dim));
      std::iota(g.indices.begin(), g.indices.end(), 0);
      spec.groups.push_back(std::move(g));
      return spec;
    }
    int start = 0;
    for (int size : survey_group_sizes) {
      ViewGroupSpec g;
      g.hidden = group_hidden;
      for (int i = 0; i < size; ++i) g.indices.push_back(start + i);
      start += size;
      spec.groups.push_back(std::move(g));
    }
    return spec;
  }

  ViewEmbeddingSpec u_view() const {
    ViewEmbeddingSpec spec;
    spec.input_dim = u_dim;
    spec.combined_hidden = combined_hidden;
    if (flat_embedding) {
      ViewGroupSpec g;
      g.hidden = group_hidden;
      g.indices.resize(static_cast<std::size_t>(u_dim));
      std::iota(g.indices.begin(), g.indices.end(), 0);
      spec.groups.push_back(std::move(g));
      return spec;
    }
    ViewGroupSpec stratum;
    stratum.hidden = group_hidden;
    for (int i = 0; i < kStratumDims; ++i) stratum.indices.push_back(i);
    ViewGroupSpec life;
    life.hidden = group_hidden;
    for (int i = kStratumDims; i < u_dim; ++i) life.indices.push_back(i);
    spec.groups.push_back(std::move(stratum));
    spec.groups.push_back(std::move(life));
    return spec;
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"survey_dim", survey_dim},
                          {"u_dim", u_dim},
                          {"n_classes", n_classes},
                          {"survey_group_sizes", survey_group_sizes},
                          {"group_hidden", group_hidden},
                          {"combined_hidden", combined_hidden},
                          {"trunk_hidden", trunk_hidden},
                          {"critic_sigmoid", critic_sigmoid},
                          {"gp_at_interpolates", gp_at_interpolates},
                          {"flat_embedding", flat_embedding}};
  }

  static ArchConfig from_json(const nlohmann::json& j) {
    ArchConfig a;
    a.survey_dim = j.at("survey_dim").get<int>();
    a.u_dim = j.at("u_dim").get<int>();
    a.n_classes = j.at("n_classes").get<int>();
    a.survey_group_sizes = j.at("survey_group_sizes").get<std::vector<int>>();
    a.group_hidden = j.at("group_hidden").get<int>();
    a.combined_hidden = j.at("combined_hidden").get<int>();
    a.trunk_hidden = j.at("trunk_hidden").get<int>();
    a.critic_sigmoid = j.at("critic_sigmoid").get<bool>();
    a.gp_at_interpolates = j.at("gp_at_interpolates").get<bool>();
    a.flat_embedding = j.at("flat_embedding").get<bool>();
    a.validate();
    return a;
  }
};

// ---- parameter construction ----

namespace detail {

inline Matrix glorot_init(int fan_in, int fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Matrix m(fan_in, fan_out);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

inline void add_view_params(ParameterSet& ps, const std::string& prefix,
                            const ViewEmbeddingSpec& spec, Rng& rng) {
  for (std::size_t g = 0; g < spec.groups.size(); ++g) {
    const auto& grp = spec.groups[g];
    const std::string base = prefix + ".g" + std::to_string(g);
    ps.add(base + ".w", glorot_init(static_cast<int>(grp.indices.size()), grp.hidden, rng));
    ps.add(base + ".b", Matrix(1, grp.hidden));
  }
  ps.add(prefix + ".comb.w", glorot_init(spec.concat_width(), spec.combined_hidden, rng));
  ps.add(prefix + ".comb.b", Matrix(1, spec.combined_hidden));
}

inline void view_param_names(std::vector<std::string>& out, const std::string& prefix,
                             const ViewEmbeddingSpec& spec) {
  for (std::size_t g = 0; g < spec.groups.size(); ++g) {
    out.push_back(prefix + ".g" + std::to_string(g) + ".w");
    out.push_back(prefix + ".g" + std::to_string(g) + ".b");
  }
  out.push_back(prefix + ".comb.w");
  out.push_back(prefix + ".comb.b");
}

}  // namespace detail

inline ParameterSet init_parameters(const ArchConfig& arch, Rng& rng) {
  arch.validate();
  ParameterSet ps;
  detail::add_view_params(ps, "gen.u_view", arch.u_view(), rng);
  ps.add("gen.out.w", detail::glorot_init(arch.combined_hidden, arch.survey_dim, rng));
  ps.add("gen.out.b", Matrix(1, arch.survey_dim));
  detail::add_view_params(ps, "disc.s_view", arch.survey_view(), rng);
  detail::add_view_params(ps, "disc.u_view", arch.u_view(), rng);
  ps.add("disc.trunk.w", detail::glorot_init(2 * arch.combined_hidden, arch.trunk_hidden, rng));
  ps.add("disc.trunk.b", Matrix(1, arch.trunk_hidden));
  ps.add("disc.critic.w", detail::glorot_init(arch.trunk_hidden, 1, rng));
  ps.add("disc.critic.b", Matrix(1, 1));
  ps.add("disc.cls.w", detail::glorot_init(arch.trunk_hidden, arch.n_classes, rng));
  ps.add("disc.cls.b", Matrix(1, arch.n_classes));
  return ps;
}

inline std::vector<std::string> generator_param_names(const ArchConfig& arch) {
  std::vector<std::string> out;
  detail::view_param_names(out, "gen.u_view", arch.u_view());
  out.push_back("gen.out.w");
  out.push_back("gen.out.b");
  return out;
}

inline std::vector<std::string> discriminator_param_names(const ArchConfig& arch) {
  std::vector<std::string> out;
  detail::view_param_names(out, "disc.s_view", arch.survey_view());
  detail::view_param_names(out, "disc.u_view", arch.u_view());
  out.insert(out.end(), {"disc.trunk.w", "disc.trunk.b", "disc.critic.w", "disc.critic.b",
                         "disc.cls.w", "disc.cls.b"});
  return out;
}

// The D_align subset co-trained with the generator: survey view embedding,
// trunk, and classifier head. The critic head and the consumer-model view
// embedding are excluded.
inline std::vector<std::string> d_align_param_names(const ArchConfig& arch) {
  std::vector<std::string> out;
  detail::view_param_names(out, "disc.s_view", arch.survey_view());
  out.insert(out.end(), {"disc.trunk.w", "disc.trunk.b", "disc.cls.w", "disc.cls.b"});
  return out;
}

// ---- graph builders ----

// Resolves parameter names to tape nodes. Each parameter gets a single
// kParam node; call sites that must not receive gradients wrap the node in
// stop_grad, so an excluded parameter's autodiff gradient is exactly zero.
//
// A separate frozen source may be supplied: frozen uses then read constants
// from it instead of the live set. Finite-difference oracles rely on this
// to perturb live parameters while the detached paths stay pinned.
class ParamBinding {
 public:
  ParamBinding(Tape& tape, const ParameterSet& params, const ParameterSet* frozen = nullptr)
      : tape_(tape), params_(params), frozen_(frozen == nullptr ? &params : frozen) {}

  int use(const std::string& name, bool live) {
    if (live) return raw(name);
    if (frozen_ == &params_) return tape_.stop_grad(raw(name));
    auto it = frozen_cache_.find(name);
    if (it != frozen_cache_.end()) return it->second;
    const int node = tape_.constant(frozen_->at(name));
    frozen_cache_.emplace(name, node);
    return node;
  }

  int raw(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    const int node = tape_.param(params_.at(name));
    cache_.emplace(name, node);
    return node;
  }

  const std::map<std::string, int>& nodes() const { return cache_; }

 private:
  Tape& tape_;
  const ParameterSet& params_;
  const ParameterSet* frozen_;
  std::map<std::string, int> cache_;
  std::map<std::string, int> frozen_cache_;
};

using LivePolicy = std::function<bool(const std::string&)>;

inline const LivePolicy kAllLive = [](const std::string&) { return true; };
inline const LivePolicy kAllFrozen = [](const std::string&) { return false; };

// Per-group FC+ReLU over each dimension group, concatenated, then a
// combining FC+ReLU.
inline int build_view_embedding(Tape& t, int input, const ViewEmbeddingSpec& spec,
                                ParamBinding& bind, const std::string& prefix,
                                const LivePolicy& live) {
  if (t.cols(input) != spec.input_dim)
    throw ValidationError("view embedding: input width does not match the spec");
  int concat = -1;
  for (std::size_t g = 0; g < spec.groups.size(); ++g) {
    const auto& grp = spec.groups[g];
    const std::string base = prefix + ".g" + std::to_string(g);
    const int piece = t.gather_cols(input, grp.indices);
    const int w = bind.use(base + ".w", live(base + ".w"));
    const int b = bind.use(base + ".b", live(base + ".b"));
    const int sub = t.relu(t.add_rowvec(t.matmul(piece, w), b));
    concat = concat < 0 ? sub : t.concat_cols(concat, sub);
  }
  const int w = bind.use(prefix + ".comb.w", live(prefix + ".comb.w"));
  const int b = bind.use(prefix + ".comb.b", live(prefix + ".comb.b"));
  return t.relu(t.add_rowvec(t.matmul(concat, w), b));
}

inline int build_generator(Tape& t, int u_node, const ArchConfig& arch, ParamBinding& bind,
                           const LivePolicy& live) {
  const int emb = build_view_embedding(t, u_node, arch.u_view(), bind, "gen.u_view", live);
  const int w = bind.use("gen.out.w", live("gen.out.w"));
  const int b = bind.use("gen.out.b", live("gen.out.b"));
  return t.sigmoid(t.add_rowvec(t.matmul(emb, w), b));
}

struct DiscNodes {
  int critic = -1;  // m x 1
  int logits = -1;  // m x n_classes
};

inline DiscNodes build_discriminator(Tape& t, int u_node, int s_node, const ArchConfig& arch,
                                     ParamBinding& bind, const LivePolicy& live) {
  const int s_emb = build_view_embedding(t, s_node, arch.survey_view(), bind, "disc.s_view", live);
  const int u_emb = build_view_embedding(t, u_node, arch.u_view(), bind, "disc.u_view", live);
  const int both = t.concat_cols(u_emb, s_emb);
  const int trunk = t.relu(t.add_rowvec(
      t.matmul(both, bind.use("disc.trunk.w", live("disc.trunk.w"))),
      bind.use("disc.trunk.b", live("disc.trunk.b"))));
  DiscNodes out;
  const int critic_pre = t.add_rowvec(
      t.matmul(trunk, bind.use("disc.critic.w", live("disc.critic.w"))),
      bind.use("disc.critic.b", live("disc.critic.b")));
  out.critic = arch.critic_sigmoid ? t.sigmoid(critic_pre) : critic_pre;
  out.logits = t.add_rowvec(t.matmul(trunk, bind.use("disc.cls.w", live("disc.cls.w"))),
                            bind.use("disc.cls.b", live("disc.cls.b")));
  return out;
}

// ---- eager inference ----

inline Matrix clamp01(Matrix m) {
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = std::clamp(m.data()[i], 0.0, 1.0);
  return m;
}

// Generated surveys for a batch of consumer-model vectors. Inputs are
// clamped to [0, 1] first so noise-perturbed U keeps its feature semantics.
inline Matrix generate(const ParameterSet& params, const ArchConfig& arch, Matrix u) {
  Tape t;
  ParamBinding bind(t, params);
  const int u_node = t.input(clamp01(std::move(u)));
  const int out = build_generator(t, u_node, arch, bind, kAllFrozen);
  return t.value(out);
}

struct Discrimination {
  Matrix critic;  // m x 1
  Matrix probs;   // m x n_classes, rows sum to 1
};

inline Discrimination discriminate(const ParameterSet& params, const ArchConfig& arch,
                                   const Matrix& u, const Matrix& s) {
  if (u.rows() != s.rows()) throw ValidationError("discriminate: U and S batches must align");
  Tape t;
  ParamBinding bind(t, params);
  const DiscNodes d = build_discriminator(t, t.input(u), t.input(s), arch, bind, kAllFrozen);
  const int probs = t.softmax_row(d.logits);
  Discrimination out;
  out.critic = t.value(d.critic);
  out.probs = t.value(probs);
  return out;
}

inline Matrix one_hot(const std::vector<int>& labels, int n_classes) {
  Matrix m(static_cast<int>(labels.size()), n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes)
      throw ValidationError("label outside [0, n_classes)");
    m.at(static_cast<int>(i), labels[i]) = 1.0;
  }
  return m;
}

// ---- losses ----

struct LossBreakdown {
  double wasserstein_term = 0.0;      // E[D(fake)] - E[D(real)]
  double gradient_penalty_term = 0.0;  // lambda * GP
  double classification_fake = 0.0;
  double classification_real = 0.0;
  double total = 0.0;
  int gp_zero_rows = 0;

  // total = wasserstein + lambda*GP + (CE_fake + CE_real) / 2
  static double compose(double wasserstein, double weighted_gp, double ce_fake, double ce_real) {
    return wasserstein + weighted_gp + 0.5 * (ce_fake + ce_real);
  }
};

struct BuiltLoss {
  Tape tape;
  int total = -1;
  // Parameters receiving gradients, in update order.
  std::vector<std::pair<std::string, int>> update_params;
  // Every referenced parameter (for gradient-partition checks).
  std::map<std::string, int> all_params;
  LossBreakdown breakdown;
  double weight_w = 0.0;  // only set by the G/D_align loss
};

// Discriminator loss over a batch from E_f: Wasserstein term, gradient
// penalty at the generated samples (or at real/fake interpolates when
// configured), and the classifier cross-entropies on fake and real pairs.
// The generator is treated as a fixed sampler here, so only discriminator
// parameters receive gradients.
inline BuiltLoss build_loss_d(const ParameterSet& params, const ArchConfig& arch, const Matrix& u,
                              const Matrix& s_real, const std::vector<int>& labels, double lambda,
                              Rng* interp_rng = nullptr) {
  if (u.rows() == 0) throw ValidationError("loss_d: empty batch");
  if (u.rows() != s_real.rows() || static_cast<std::size_t>(u.rows()) != labels.size())
    throw ValidationError("loss_d: batch pieces must align");

  BuiltLoss out;
  Tape& t = out.tape;
  const Matrix s_fake = generate(params, arch, u);

  ParamBinding bind(t, params);
  const int u_node = t.input(u);
  const int fake_node = t.input(s_fake);
  const int real_node = t.input(s_real);
  const int targets = t.constant(one_hot(labels, arch.n_classes));

  const DiscNodes on_fake = build_discriminator(t, u_node, fake_node, arch, bind, kAllLive);
  const DiscNodes on_real = build_discriminator(t, u_node, real_node, arch, bind, kAllLive);

  const int wass = t.lincomb(1.0, t.mean_all(on_fake.critic), -1.0, t.mean_all(on_real.critic));
  const int ce_fake = t.softmax_xent(on_fake.logits, targets);
  const int ce_real = t.softmax_xent(on_real.logits, targets);

  Tape::PenaltyGraph pg;
  if (arch.gp_at_interpolates) {
    if (interp_rng == nullptr)
      throw ValidationError("loss_d: interpolate mode requires an RNG");
    Matrix mix(u.rows(), s_real.cols());
    for (int r = 0; r < u.rows(); ++r) {
      const double eps = interp_rng->next_unit();
      for (int c = 0; c < s_real.cols(); ++c)
        mix.at(r, c) = eps * s_real.at(r, c) + (1.0 - eps) * s_fake.at(r, c);
    }
    const int mix_node = t.input(std::move(mix));
    const DiscNodes on_mix = build_discriminator(t, u_node, mix_node, arch, bind, kAllLive);
    pg = t.input_gradient_penalty(on_mix.critic, mix_node);
  } else {
    pg = t.input_gradient_penalty(on_fake.critic, fake_node);
  }

  const int weighted_gp = t.affine(pg.penalty, lambda, 0.0);
  const int ce_half = t.lincomb(0.5, ce_fake, 0.5, ce_real);
  out.total = t.lincomb(1.0, t.lincomb(1.0, wass, 1.0, weighted_gp), 1.0, ce_half);

  out.breakdown.wasserstein_term = t.scalar_value(wass);
  out.breakdown.gradient_penalty_term = t.scalar_value(weighted_gp);
  out.breakdown.classification_fake = t.scalar_value(ce_fake);
  out.breakdown.classification_real = t.scalar_value(ce_real);
  out.breakdown.total = t.scalar_value(out.total);
  out.breakdown.gp_zero_rows = pg.zero_rows;

  for (const auto& name : discriminator_param_names(arch))
    out.update_params.emplace_back(name, bind.raw(name));
  out.all_params = bind.nodes();
  return out;
}

// Generator / D_align loss over a mixed batch B_b. The Wasserstein term is
// a pure generator objective: the critic path is evaluated with every
// discriminator parameter behind stop_grad, so its gradient targets theta
// only and the critic head's gradient is exactly zero. The class terms
// train theta together with the D_align subset.
inline BuiltLoss build_loss_g_dalign(const ParameterSet& params, const ArchConfig& arch,
                                     const Matrix& u_l, const std::vector<int>& labels_l,
                                     const Matrix& u_f, const Matrix& s_f,
                                     const std::vector<int>& labels_f,
                                     const ParameterSet* frozen = nullptr) {
  if (u_l.rows() == 0 || u_f.rows() == 0)
    throw ValidationError("loss_g_dalign: batch must contain both populations");
  if (static_cast<std::size_t>(u_l.rows()) != labels_l.size() ||
      static_cast<std::size_t>(u_f.rows()) != labels_f.size() || u_f.rows() != s_f.rows())
    throw ValidationError("loss_g_dalign: batch pieces must align");

  const auto align_names = d_align_param_names(arch);
  const LivePolicy gen_live = [](const std::string& n) { return n.rfind("gen.", 0) == 0; };
  const LivePolicy align_live = [&align_names](const std::string& n) {
    return std::find(align_names.begin(), align_names.end(), n) != align_names.end();
  };

  BuiltLoss out;
  Tape& t = out.tape;
  ParamBinding bind(t, params, frozen);

  const int u_l_node = t.input(clamp01(u_l));
  const int u_f_node = t.input(u_f);
  const int s_f_node = t.input(s_f);
  const int fake = build_generator(t, u_l_node, arch, bind, gen_live);

  // Wasserstein term: frozen discriminator, gradients flow into theta only.
  const DiscNodes detached = build_discriminator(t, u_l_node, fake, arch, bind, kAllFrozen);
  const int wass = t.affine(t.mean_all(detached.critic), -1.0, 0.0);

  // Class terms: D_align live, consumer-view embedding and critic frozen.
  const DiscNodes on_fake = build_discriminator(t, u_l_node, fake, arch, bind, align_live);
  const DiscNodes on_real = build_discriminator(t, u_f_node, s_f_node, arch, bind, align_live);
  const int ce_fake = t.softmax_xent(on_fake.logits, t.constant(one_hot(labels_l, arch.n_classes)));
  const int ce_real = t.softmax_xent(on_real.logits, t.constant(one_hot(labels_f, arch.n_classes)));

  // Damps the generated-sample class loss by the population ratio in the
  // batch so the plentiful unpaired consumers cannot swamp the real ones.
  out.weight_w = static_cast<double>(u_f.rows()) / static_cast<double>(u_l.rows());
  out.total = t.lincomb(1.0, t.lincomb(1.0, wass, out.weight_w, ce_fake), 1.0, ce_real);

  out.breakdown.wasserstein_term = t.scalar_value(wass);
  out.breakdown.classification_fake = t.scalar_value(ce_fake);
  out.breakdown.classification_real = t.scalar_value(ce_real);
  out.breakdown.total = t.scalar_value(out.total);

  for (const auto& name : align_names) out.update_params.emplace_back(name, bind.raw(name));
  for (const auto& name : generator_param_names(arch))
    out.update_params.emplace_back(name, bind.raw(name));
  out.all_params = bind.nodes();
  return out;
}

// Gradients for the parameters an update step applies to.
inline std::vector<std::pair<std::string, Matrix>> loss_gradients(BuiltLoss& loss) {
  std::vector<int> nodes;
  nodes.reserve(loss.update_params.size());
  for (const auto& [name, node] : loss.update_params) nodes.push_back(node);
  const auto grads = loss.tape.gradients(loss.total, nodes);
  std::vector<std::pair<std::string, Matrix>> out;
  out.reserve(grads.size());
  for (std::size_t i = 0; i < grads.size(); ++i)
    out.emplace_back(loss.update_params[i].first, grads[i]);
  return out;
}

}  // namespace adgan
