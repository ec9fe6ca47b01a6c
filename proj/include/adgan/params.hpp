#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "adgan/common.hpp"
#include "adgan/matrix.hpp"

namespace adgan {

// Named parameter tensors with deterministic (insertion) iteration order.
class ParameterSet {
 public:
  void add(const std::string& name, Matrix value) {
    if (index_.count(name)) throw ValidationError("duplicate parameter name: " + name);
    index_[name] = names_.size();
    names_.push_back(name);
    values_.push_back(std::move(value));
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  const Matrix& at(const std::string& name) const { return values_[find(name)]; }
  Matrix& at(const std::string& name) { return values_[find(name)]; }

  const std::vector<std::string>& names() const { return names_; }
  std::size_t count() const { return names_.size(); }

  // Fingerprint of the raw parameter bytes; used by tests to verify that an
  // update touched only the intended subset.
  std::uint64_t hash(const std::vector<std::string>& subset) const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& name : subset) {
      const Matrix& m = at(name);
      h = fnv1a(name, h);
      h = fnv1a_bytes(m.data(), m.size() * sizeof(double), h);
    }
    return h;
  }

  std::uint64_t hash_all() const { return hash(names_); }

 private:
  std::size_t find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("unknown parameter: " + name);
    return it->second;
  }

  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace adgan
