#pragma once

#include <map>
#include <string>

#include <Eigen/Dense>

#include "ace/errors.hpp"

namespace ace {

// Named hierarchy of dense arrays. Hierarchy is encoded in the keys
// ("block0/attn/wq"); std::map keeps iteration order deterministic, which is
// what makes flatten/unflatten an exact inverse pair.
class ParamTree {
 public:
  using Map = std::map<std::string, Eigen::MatrixXd>;

  ParamTree() = default;

  void insert(const std::string& name, Eigen::MatrixXd value) {
    if (entries_.count(name)) throw param_error("ParamTree: duplicate name " + name);
    entries_.emplace(name, std::move(value));
  }

  bool contains(const std::string& name) const { return entries_.count(name) > 0; }

  const Eigen::MatrixXd& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw param_error("ParamTree: no entry named " + name);
    return it->second;
  }

  Eigen::MatrixXd& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw param_error("ParamTree: no entry named " + name);
    return it->second;
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  Map::const_iterator begin() const { return entries_.begin(); }
  Map::const_iterator end() const { return entries_.end(); }
  Map::iterator begin() { return entries_.begin(); }
  Map::iterator end() { return entries_.end(); }

  Eigen::Index value_count() const {
    Eigen::Index n = 0;
    for (const auto& [name, m] : entries_) n += m.size();
    return n;
  }

  // Same keys, same shapes.
  bool same_structure(const ParamTree& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    auto a = entries_.begin();
    auto b = other.entries_.begin();
    for (; a != entries_.end(); ++a, ++b) {
      if (a->first != b->first) return false;
      if (a->second.rows() != b->second.rows() || a->second.cols() != b->second.cols()) return false;
    }
    return true;
  }

  Eigen::VectorXd flatten() const {
    Eigen::VectorXd flat(value_count());
    Eigen::Index at = 0;
    for (const auto& [name, m] : entries_) {
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) flat(at++) = m(i, j);
    }
    return flat;
  }

  // Writes flat values back into this tree's shapes.
  void unflatten(const Eigen::VectorXd& flat) {
    if (flat.size() != value_count()) throw param_error("unflatten: length mismatch");
    Eigen::Index at = 0;
    for (auto& [name, m] : entries_) {
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = flat(at++);
    }
  }

  ParamTree zeros_like() const {
    ParamTree out;
    for (const auto& [name, m] : entries_)
      out.insert(name, Eigen::MatrixXd::Zero(m.rows(), m.cols()));
    return out;
  }

  void add_scaled(const ParamTree& other, double scale) {
    if (!same_structure(other)) throw param_error("add_scaled: structure mismatch");
    auto a = entries_.begin();
    auto b = other.entries_.begin();
    for (; a != entries_.end(); ++a, ++b) a->second += scale * b->second;
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& [name, m] : entries_) s += m.squaredNorm();
    return s;
  }

  bool all_finite() const {
    for (const auto& [name, m] : entries_)
      if (!m.allFinite()) return false;
    return true;
  }

 private:
  Map entries_;
};

}  // namespace ace
