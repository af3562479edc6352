#ifndef KPX_AUTODIFF_PARAMS_HPP_
#define KPX_AUTODIFF_PARAMS_HPP_

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "kpx/autodiff/value.hpp"

namespace kpx::ad {

struct Tensor {
  Shape shape;
  std::vector<double> data;
};

/// Named, ordered collection of learnable tensors. Insertion order is the
/// canonical order used for checkpoints and gradient reduction.
class ParamStore {
 public:
  void add(const std::string& name, Tensor tensor);
  /// Glorot-uniform matrix drawn from a generator seeded by (seed, name), so
  /// adding a parameter never perturbs the initialisation of the others.
  void add_glorot(const std::string& name, std::size_t rows, std::size_t cols, std::uint64_t seed);
  void add_zeros(const std::string& name, Shape shape);

  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  std::size_t index(const std::string& name) const;
  std::size_t count() const { return tensors_.size(); }
  std::size_t total_size() const;

  const std::string& name(std::size_t i) const { return names_[i]; }
  const Tensor& tensor(std::size_t i) const { return tensors_[i]; }
  Tensor& tensor(std::size_t i) { return tensors_[i]; }
  const Tensor& tensor(const std::string& name) const { return tensors_[index(name)]; }

  bool operator==(const ParamStore& other) const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// One gradient buffer per ParamStore entry, same order and shapes.
using GradientSet = std::vector<std::vector<double>>;

GradientSet zero_gradients(const ParamStore& store);
double global_norm(const GradientSet& grads);

/// Per-graph view of a ParamStore: each parameter is copied into a leaf Value
/// the first time it is requested. Unrequested parameters report zero grads.
class ParamBinding {
 public:
  explicit ParamBinding(const ParamStore& store, bool trainable = true);

  const Value& operator()(const std::string& name);
  const Value& at(std::size_t index);
  void bind_all();

  /// Bound leaves in store order (unbound entries are skipped).
  std::vector<Value> bound() const;
  bool is_bound(std::size_t index) const { return values_[index].defined(); }

  /// Adds `factor` times each bound leaf's gradient into `out`.
  void accumulate_into(GradientSet& out, double factor = 1.0) const;
  GradientSet gradients() const;

  const ParamStore& store() const { return *store_; }

 private:
  const ParamStore* store_;
  bool trainable_;
  std::vector<Value> values_;
};

std::uint64_t hash_combine(std::uint64_t seed, const std::string& text);

}  // namespace kpx::ad

#endif  // KPX_AUTODIFF_PARAMS_HPP_
