#include "kpx/autodiff/params.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace kpx::ad {

std::uint64_t hash_combine(std::uint64_t seed, const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ (seed * 0x9e3779b97f4a7c15ULL);
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  // splitmix finaliser
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  return h ^ (h >> 31);
}

void ParamStore::add(const std::string& name, Tensor tensor) {
  if (contains(name)) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
  if (shape_size(tensor.shape) != tensor.data.size()) {
    throw ShapeError("ParamStore::add", tensor.shape, name);
  }
  index_[name] = tensors_.size();
  names_.push_back(name);
  tensors_.push_back(std::move(tensor));
}

void ParamStore::add_glorot(const std::string& name, std::size_t rows, std::size_t cols,
                            std::uint64_t seed) {
  std::mt19937_64 rng(hash_combine(seed, name));
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t{{rows, cols}, std::vector<double>(rows * cols)};
  for (double& v : t.data) v = dist(rng);
  add(name, std::move(t));
}

void ParamStore::add_zeros(const std::string& name, Shape shape) {
  const std::size_t n = shape_size(shape);
  add(name, Tensor{std::move(shape), std::vector<double>(n, 0.0)});
}

std::size_t ParamStore::index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamStore: unknown parameter " + name);
  return it->second;
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.data.size();
  return n;
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].shape != other.tensors_[i].shape) return false;
    if (tensors_[i].data != other.tensors_[i].data) return false;
  }
  return true;
}

GradientSet zero_gradients(const ParamStore& store) {
  GradientSet g(store.count());
  for (std::size_t i = 0; i < store.count(); ++i) g[i].assign(store.tensor(i).data.size(), 0.0);
  return g;
}

double global_norm(const GradientSet& grads) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double v : g) sq += v * v;
  }
  return std::sqrt(sq);
}

ParamBinding::ParamBinding(const ParamStore& store, bool trainable)
    : store_(&store), trainable_(trainable), values_(store.count()) {}

const Value& ParamBinding::operator()(const std::string& name) { return at(store_->index(name)); }

const Value& ParamBinding::at(std::size_t index) {
  Value& v = values_.at(index);
  if (!v.defined()) {
    const Tensor& t = store_->tensor(index);
    v = trainable_ ? Value::parameter(t.shape, t.data) : Value::constant(t.shape, t.data);
  }
  return v;
}

void ParamBinding::bind_all() {
  for (std::size_t i = 0; i < values_.size(); ++i) at(i);
}

std::vector<Value> ParamBinding::bound() const {
  std::vector<Value> out;
  for (const auto& v : values_) {
    if (v.defined()) out.push_back(v);
  }
  return out;
}

void ParamBinding::accumulate_into(GradientSet& out, double factor) const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const Value& v = values_[i];
    if (!v.defined() || v.grad().empty()) continue;
    auto g = v.grad();
    for (std::size_t j = 0; j < g.size(); ++j) out[i][j] += factor * g[j];
  }
}

GradientSet ParamBinding::gradients() const {
  GradientSet g = zero_gradients(*store_);
  accumulate_into(g);
  return g;
}

}  // namespace kpx::ad
