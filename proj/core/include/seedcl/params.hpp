#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seedcl/error.hpp"

namespace seedcl {

template <typename Real>
struct ParamEntry {
  std::string name;
  std::vector<int> shape;
  std::vector<Real> values;
  bool trainable = true;

  std::size_t size() const noexcept { return values.size(); }
  friend bool operator==(const ParamEntry&, const ParamEntry&) = default;
};

inline std::size_t shape_size(const std::vector<int>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

/// Ordered, named, shape-tagged parameter arrays. Shapes are fixed once an
/// entry is added; only values and the trainable flag change afterwards.
template <typename Real>
class ParamStore {
 public:
  ParamEntry<Real>& add(std::string name, std::vector<int> shape, bool trainable = true) {
    if (index_.contains(name)) throw ConfigError("duplicate parameter " + name);
    const std::size_t n = shape_size(shape);
    index_.emplace(name, entries_.size());
    entries_.push_back(ParamEntry<Real>{std::move(name), std::move(shape), std::vector<Real>(n, Real(0)), trainable});
    return entries_.back();
  }

  bool contains(std::string_view name) const { return index_.find(name) != index_.end(); }

  const ParamEntry<Real>& at(std::string_view name) const { return entries_[position(name)]; }

  std::span<const Real> values(std::string_view name) const { return entries_[position(name)].values; }
  std::span<Real> values(std::string_view name) { return entries_[position(name)].values; }

  bool trainable(std::string_view name) const { return entries_[position(name)].trainable; }
  void set_trainable(std::string_view name, bool on) { entries_[position(name)].trainable = on; }

  std::size_t size() const noexcept { return entries_.size(); }
  const ParamEntry<Real>& entry(std::size_t i) const { return entries_[i]; }
  std::span<Real> data(std::size_t i) { return entries_[i].values; }
  const std::vector<ParamEntry<Real>>& entries() const noexcept { return entries_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.size();
    return n;
  }

  std::size_t count_prefix(std::string_view prefix) const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += std::string_view(e.name).starts_with(prefix) ? 1 : 0;
    return n;
  }

  /// Removes every entry whose name starts with prefix; returns how many.
  std::size_t erase_prefix(std::string_view prefix) {
    const std::size_t before = entries_.size();
    std::erase_if(entries_, [&](const ParamEntry<Real>& e) { return std::string_view(e.name).starts_with(prefix); });
    reindex();
    return before - entries_.size();
  }

  void set_trainable_prefix(std::string_view prefix, bool on) {
    for (auto& e : entries_)
      if (std::string_view(e.name).starts_with(prefix)) e.trainable = on;
  }

  /// Entries under prefix, copied.
  ParamStore subset(std::string_view prefix) const {
    ParamStore out;
    for (const auto& e : entries_)
      if (std::string_view(e.name).starts_with(prefix)) out.push(e);
    return out;
  }

  /// Same names, shapes and flags with all values zero. Used for gradients.
  ParamStore zeros_like() const {
    ParamStore out;
    for (const auto& e : entries_) out.push(ParamEntry<Real>{e.name, e.shape, std::vector<Real>(e.size(), Real(0)), e.trainable});
    return out;
  }

  void fill(Real v) {
    for (auto& e : entries_) std::fill(e.values.begin(), e.values.end(), v);
  }

  /// Appends all entries of other; names must not collide.
  void merge(const ParamStore& other) {
    for (const auto& e : other.entries_) {
      if (contains(e.name)) throw ConfigError("duplicate parameter " + e.name);
      push(e);
    }
  }

  void push(ParamEntry<Real> e) {
    if (e.values.size() != shape_size(e.shape)) throw ShapeMismatch("parameter " + e.name + " size does not match shape");
    if (index_.contains(e.name)) throw ConfigError("duplicate parameter " + e.name);
    index_.emplace(e.name, entries_.size());
    entries_.push_back(std::move(e));
  }

  template <typename To>
  ParamStore<To> cast() const {
    ParamStore<To> out;
    for (const auto& e : entries_) {
      ParamEntry<To> c{e.name, e.shape, std::vector<To>(e.values.begin(), e.values.end()), e.trainable};
      out.push(std::move(c));
    }
    return out;
  }

  friend bool operator==(const ParamStore& a, const ParamStore& b) { return a.entries_ == b.entries_; }

 private:
  std::size_t position(std::string_view name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw ShapeMismatch("unknown parameter " + std::string(name));
    return it->second;
  }
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < entries_.size(); ++i) index_.emplace(entries_[i].name, i);
  }

  std::vector<ParamEntry<Real>> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

}  // namespace seedcl
