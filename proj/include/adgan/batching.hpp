#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "adgan/common.hpp"
#include "adgan/features.hpp"
#include "adgan/rng.hpp"

namespace adgan {

enum class SamplingStrategy { kRandom, kOversample, kUndersample };

inline SamplingStrategy parse_strategy(const std::string& s) {
  if (s == "random") return SamplingStrategy::kRandom;
  if (s == "over" || s == "oversample") return SamplingStrategy::kOversample;
  if (s == "under" || s == "undersample") return SamplingStrategy::kUndersample;
  throw ValidationError("unknown sampling strategy: " + s);
}

inline const char* strategy_name(SamplingStrategy s) {
  switch (s) {
    case SamplingStrategy::kRandom: return "random";
    case SamplingStrategy::kOversample: return "oversample";
    case SamplingStrategy::kUndersample: return "undersample";
  }
  return "?";
}

struct NoiseSpec {
  int count = 0;  // coordinates perturbed per vector
  double mu = 0.0;
  double sigma = 0.0;

  void validate(int vector_length) const {
    if (count < 0 || count > vector_length)
      throw ValidationError("noise: count must lie in [0, vector length]");
    if (sigma < 0.0) throw ValidationError("noise: sigma must be non-negative");
  }
};

// Adds a N(mu, sigma^2) draw at `count` distinct positions chosen uniformly
// without replacement; all other positions are untouched.
inline void gaussian_fuse(double* v, int length, const NoiseSpec& spec, Rng& rng) {
  spec.validate(length);
  const auto positions = rng.sample_indices(length, spec.count);
  for (int p : positions) v[p] += rng.normal(spec.mu, spec.sigma);
}

inline std::vector<double> gaussian_fuse(std::vector<double> v, const NoiseSpec& spec, Rng& rng) {
  gaussian_fuse(v.data(), static_cast<int>(v.size()), spec, rng);
  return v;
}

// Draws discriminator batches B_a from the paired population. Oversampling
// and undersampling build a class-balanced pool, shuffle it, and hand out
// consecutive slices until the pool is exhausted, then rebuild.
class BatchASampler {
 public:
  BatchASampler(std::vector<int> labels, int n_classes, SamplingStrategy strategy, Rng rng)
      : labels_(std::move(labels)), strategy_(strategy), rng_(rng) {
    if (labels_.empty()) throw ValidationError("batch sampler: empty population");
    members_.resize(static_cast<std::size_t>(n_classes));
    for (int i = 0; i < static_cast<int>(labels_.size()); ++i) {
      const int label = labels_[static_cast<std::size_t>(i)];
      if (label < 0 || label >= n_classes)
        throw ValidationError("batch sampler: label outside [0, n_classes)");
      members_[static_cast<std::size_t>(label)].push_back(i);
    }
    if (strategy_ != SamplingStrategy::kRandom) {
      for (std::size_t c = 0; c < members_.size(); ++c)
        if (members_[c].empty())
          throw ValidationError("batch sampler: class " + std::to_string(c) +
                                " absent from the paired population");
    }
  }

  // Indices into the population this sampler was built over.
  std::vector<int> next(int size) {
    if (size < 1) throw ValidationError("batch sampler: size must be >= 1");
    std::vector<int> batch;
    batch.reserve(static_cast<std::size_t>(size));
    if (strategy_ == SamplingStrategy::kRandom) {
      for (int i = 0; i < size; ++i)
        batch.push_back(rng_.uniform_int(static_cast<int>(labels_.size())));
      return batch;
    }
    while (static_cast<int>(batch.size()) < size) {
      if (cursor_ >= pool_.size()) rebuild_pool();
      batch.push_back(pool_[cursor_++]);
    }
    return batch;
  }

 private:
  void rebuild_pool() {
    pool_.clear();
    cursor_ = 0;
    if (strategy_ == SamplingStrategy::kOversample) {
      // Replicate every class by exact copies up to the majority count; the
      // remainder is a random draw without replacement.
      std::size_t target = 0;
      for (const auto& m : members_) target = std::max(target, m.size());
      for (const auto& m : members_) {
        const std::size_t copies = target / m.size();
        for (std::size_t k = 0; k < copies; ++k) pool_.insert(pool_.end(), m.begin(), m.end());
        const int rem = static_cast<int>(target - copies * m.size());
        for (int j : rng_.sample_indices(static_cast<int>(m.size()), rem))
          pool_.push_back(m[static_cast<std::size_t>(j)]);
      }
    } else {
      // Per-class cap at the minority-class count.
      std::size_t cap = members_[0].size();
      for (const auto& m : members_) cap = std::min(cap, m.size());
      for (const auto& m : members_)
        for (int j : rng_.sample_indices(static_cast<int>(m.size()), static_cast<int>(cap)))
          pool_.push_back(m[static_cast<std::size_t>(j)]);
    }
    rng_.shuffle(pool_);
  }

  std::vector<int> labels_;
  std::vector<std::vector<int>> members_;
  SamplingStrategy strategy_;
  Rng rng_;
  std::vector<int> pool_;
  std::size_t cursor_ = 0;
};

struct BatchB {
  std::vector<int> paired;    // indices into the paired population
  std::vector<int> unpaired;  // indices into the unpaired population

  // W = |E_f in B_b| / |E_l in B_b|; the construction keeps both non-empty.
  double weight_w() const {
    return static_cast<double>(paired.size()) / static_cast<double>(unpaired.size());
  }
};

// Builds the mixed batch B_b: paired consumers drawn proportionally to
// their class distribution, then unpaired consumers fill every class to the
// same per-class total. At least one unpaired member per class is forced so
// W stays finite and positive.
inline BatchB sample_batch_b(const std::vector<int>& paired_labels,
                             const std::vector<int>& unpaired_labels, int size, int n_classes,
                             Rng& rng) {
  if (paired_labels.empty() || unpaired_labels.empty())
    throw ValidationError("batch_b: both populations must be non-empty");
  const int per_class = std::max(1, (size + n_classes / 2) / n_classes);
  if (per_class < 2)
    throw ValidationError("batch_b: size must allow at least 2 members per class");

  std::vector<std::vector<int>> paired_members(static_cast<std::size_t>(n_classes));
  std::vector<std::vector<int>> unpaired_members(static_cast<std::size_t>(n_classes));
  for (int i = 0; i < static_cast<int>(paired_labels.size()); ++i)
    paired_members.at(static_cast<std::size_t>(paired_labels[static_cast<std::size_t>(i)]))
        .push_back(i);
  for (int i = 0; i < static_cast<int>(unpaired_labels.size()); ++i)
    unpaired_members.at(static_cast<std::size_t>(unpaired_labels[static_cast<std::size_t>(i)]))
        .push_back(i);

  // Largest-remainder apportionment of the paired draw over classes.
  const double total_paired = static_cast<double>(paired_labels.size());
  const int budget = per_class * n_classes;
  std::vector<int> quota(static_cast<std::size_t>(n_classes));
  std::vector<std::pair<double, int>> remainders;
  int assigned = 0;
  for (int c = 0; c < n_classes; ++c) {
    const double exact =
        budget * static_cast<double>(paired_members[static_cast<std::size_t>(c)].size()) /
        total_paired;
    quota[static_cast<std::size_t>(c)] = static_cast<int>(exact);
    assigned += quota[static_cast<std::size_t>(c)];
    remainders.emplace_back(exact - quota[static_cast<std::size_t>(c)], c);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (int i = 0; assigned < budget; ++i, ++assigned)
    ++quota[static_cast<std::size_t>(remainders[static_cast<std::size_t>(i % n_classes)].second)];

  BatchB batch;
  for (int c = 0; c < n_classes; ++c) {
    const auto sc = static_cast<std::size_t>(c);
    const int available = static_cast<int>(paired_members[sc].size());
    const int from_paired = std::min({quota[sc], per_class - 1, available});
    const int from_unpaired = per_class - from_paired;
    if (static_cast<int>(unpaired_members[sc].size()) < from_unpaired)
      throw ValidationError("batch_b: unpaired population lacks class " + std::to_string(c));
    for (int j : rng.sample_indices(available, from_paired))
      batch.paired.push_back(paired_members[sc][static_cast<std::size_t>(j)]);
    for (int j : rng.sample_indices(static_cast<int>(unpaired_members[sc].size()), from_unpaired))
      batch.unpaired.push_back(unpaired_members[sc][static_cast<std::size_t>(j)]);
  }
  return batch;
}

}  // namespace adgan
