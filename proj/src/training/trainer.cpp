#include "kpx/training/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "kpx/autodiff/ops.hpp"
#include "kpx/scenario/generator.hpp"

namespace kpx::training {

using ad::Value;

namespace {

constexpr std::uint64_t kShuffleSalt = 0x5348554646ULL;
constexpr std::uint64_t kDrawSalt = 0x4452415753ULL;
constexpr std::uint64_t kSplitSalt = 0x53504c4954ULL;

void require(bool ok, const std::string& field, const std::string& rule) {
  if (!ok) throw std::invalid_argument(fmt::format("TrainConfig.{}: {}", field, rule));
}

// Runs fn(i) for i in [0, n), spreading indices round-robin over `threads`
// workers. The first exception (lowest worker) is rethrown.
void for_each_index(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(threads, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

double item_or_zero(const Value& v) { return v.defined() ? v.item() : 0.0; }

}  // namespace

void TrainConfig::validate() const {
  for (auto [name, w] : {std::pair{"lambda_ar", weights.ar}, {"lambda_tp", weights.tp}, {"lambda_kjp", weights.kjp},
                         {"lambda_kp", weights.kp}, {"lambda_kcl", weights.kcl}}) {
    require(std::isfinite(w) && w >= 0.0, name, "must be finite and >= 0");
  }
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(weights.kcl == 0.0 || batch_size >= 2, "batch_size", "must be >= 2 when lambda_kcl > 0");
  require(epochs >= 1, "epochs", "must be >= 1");
  require(initial_lr > 0.0 && std::isfinite(initial_lr), "initial_lr", "must be > 0");
  require(decay_factor > 0.0 && decay_factor <= 1.0, "decay_factor", "must be in (0, 1]");
  require(decay_every_epochs >= 1, "decay_every_epochs", "must be >= 1");
  require(segments >= 1 && segments <= 8 && scenario::kHistoryFrames % segments == 0, "segments",
          fmt::format("must divide {} and be <= 8", scenario::kHistoryFrames));
  require(beta > 0.0, "beta", "must be > 0");
  require(validation_fraction >= 0.0 && validation_fraction < 1.0, "validation_fraction", "must be in [0, 1)");
  require(patience >= 1, "patience", "must be >= 1");
  require(clip_norm > 0.0, "clip_norm", "must be > 0");
  require(threads >= 1, "threads", "must be >= 1");
}

ModelConfig TrainConfig::model() const {
  ModelConfig m;
  m.heads.segments = segments;
  m.zero_keypoints = zero_keypoints;
  return m;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"lambda_ar", c.weights.ar},
          {"lambda_tp", c.weights.tp},
          {"lambda_kjp", c.weights.kjp},
          {"lambda_kp", c.weights.kp},
          {"lambda_kcl", c.weights.kcl},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"initial_lr", c.initial_lr},
          {"warmup_epochs", c.warmup_epochs},
          {"decay_factor", c.decay_factor},
          {"decay_every_epochs", c.decay_every_epochs},
          {"segments", c.segments},
          {"beta", c.beta},
          {"seed", c.seed},
          {"validation_fraction", c.validation_fraction},
          {"patience", c.patience},
          {"clip_norm", c.clip_norm},
          {"threads", c.threads},
          {"zero_keypoints", c.zero_keypoints}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& base) {
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  TrainConfig c = base;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "lambda_ar") c.weights.ar = value.get<double>();
      else if (key == "lambda_tp") c.weights.tp = value.get<double>();
      else if (key == "lambda_kjp") c.weights.kjp = value.get<double>();
      else if (key == "lambda_kp") c.weights.kp = value.get<double>();
      else if (key == "lambda_kcl") c.weights.kcl = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "epochs") c.epochs = value.get<std::size_t>();
      else if (key == "initial_lr") c.initial_lr = value.get<double>();
      else if (key == "warmup_epochs") c.warmup_epochs = value.get<std::size_t>();
      else if (key == "decay_factor") c.decay_factor = value.get<double>();
      else if (key == "decay_every_epochs") c.decay_every_epochs = value.get<std::size_t>();
      else if (key == "segments") c.segments = value.get<int>();
      else if (key == "beta") c.beta = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "validation_fraction") c.validation_fraction = value.get<double>();
      else if (key == "patience") c.patience = value.get<std::size_t>();
      else if (key == "clip_norm") c.clip_norm = value.get<double>();
      else if (key == "threads") c.threads = value.get<std::size_t>();
      else if (key == "zero_keypoints") c.zero_keypoints = value.get<bool>();
      else throw std::invalid_argument("unknown train config field: " + key);
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(fmt::format("train config field {}: {}", key, e.what()));
    }
  }
  return c;
}

double lr_schedule(std::size_t epoch, const TrainConfig& c) {
  if (epoch < c.warmup_epochs) {
    return c.initial_lr * static_cast<double>(epoch + 1) / static_cast<double>(c.warmup_epochs);
  }
  const auto steps = (epoch - c.warmup_epochs) / c.decay_every_epochs;
  return c.initial_lr * std::pow(c.decay_factor, static_cast<double>(steps));
}

void write_train_log_csv(std::ostream& out, const TrainLog& log) {
  out << "epoch,lr,ar,target,traj,score,kjp,kp,kcl,total,val_total,wall_seconds\n";
  for (const auto& r : log.epochs) {
    fmt::print(out, "{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.3f}\n", r.epoch,
               r.lr, r.ar, r.target, r.traj, r.score, r.kjp, r.kp, r.kcl, r.total, r.val_total, r.wall_seconds);
  }
}

std::vector<std::size_t> validation_split(const std::vector<scenario::Scene>& scenes, double fraction,
                                          std::uint64_t seed) {
  std::vector<std::size_t> held;
  if (fraction <= 0.0) return held;
  for (int label : {0, 1}) {
    std::vector<std::size_t> group;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      if (scenes[i].crossing_label == label) group.push_back(i);
    }
    std::mt19937_64 rng(scenario::scene_seed(seed ^ kSplitSalt, static_cast<std::uint64_t>(label)));
    for (std::size_t i = group.size(); i > 1; --i) std::swap(group[i - 1], group[rng() % i]);
    const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(group.size())));
    held.insert(held.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(std::min(take, group.size())));
  }
  std::sort(held.begin(), held.end());
  return held;
}

AuxDraw example_draw(const TrainConfig& config, std::size_t epoch, std::size_t example) {
  std::mt19937_64 rng(scenario::scene_seed(scenario::scene_seed(config.seed ^ kDrawSalt, epoch), example));
  return draw_permutations(rng, config.segments);
}

BatchResult batch_gradients(const ad::ParamStore& store, const std::vector<scenario::Scene>& scenes,
                            std::vector<std::size_t> batch, const skeleton::SkeletonSpec& spec,
                            const TrainConfig& config, std::size_t epoch, bool with_gradients) {
  if (batch.empty()) throw std::invalid_argument("batch_gradients: empty batch");
  std::sort(batch.begin(), batch.end());
  const ModelConfig model = config.model();
  const ForwardOptions options = forward_options(config.weights, model);
  const std::size_t n = batch.size();
  const double inv = 1.0 / static_cast<double>(n);

  struct Slot {
    std::unique_ptr<ad::Graph> graph;
    std::unique_ptr<ad::ParamBinding> binding;
    ExampleForward forward;
    Value loss;
  };
  std::vector<Slot> slots(n);

  for_each_index(n, config.threads, [&](std::size_t i) {
    Slot& s = slots[i];
    s.graph = std::make_unique<ad::Graph>(ad::Graph::Deferred{});
    ad::Graph::Scope scope(*s.graph);
    s.binding = std::make_unique<ad::ParamBinding>(store, with_gradients);
    s.forward = forward_example(*s.binding, scenes.at(batch[i]), spec, model, example_draw(config, epoch, batch[i]),
                                options);
    s.loss = total_loss(s.forward.losses, config.weights);
  });

  BatchResult result;
  std::vector<std::vector<double>> view_grads;
  double kcl = 0.0;
  if (options.kcl) {
    ad::Graph graph;
    std::vector<Value> leaves;
    for (const auto& s : slots) {
      for (const auto& v : s.forward.kcl_views) {
        leaves.push_back(Value::parameter(v.shape(), std::vector<double>(v.data().begin(), v.data().end())));
      }
    }
    heads::KclStats stats;
    const Value loss = heads::loss_kcl(leaves, config.beta, &stats);
    result.floored_norms = stats.floored_norms;
    kcl = loss.item();
    if (!std::isfinite(kcl)) throw NonFiniteLoss("kcl");
    if (with_gradients) {
      graph.backward(ad::scale(loss, config.weights.kcl));
      for (const auto& leaf : leaves) view_grads.emplace_back(leaf.grad().begin(), leaf.grad().end());
    }
  }

  if (with_gradients) {
    for_each_index(n, config.threads, [&](std::size_t i) {
      Slot& s = slots[i];
      ad::Graph::Scope scope(*s.graph);
      std::vector<ad::Seed> seeds{{s.loss, {inv}}};
      if (options.kcl) {
        seeds.push_back({s.forward.kcl_views[0], view_grads[2 * i]});
        seeds.push_back({s.forward.kcl_views[1], view_grads[2 * i + 1]});
      }
      s.graph->backward(seeds);
    });
    result.gradients = ad::zero_gradients(store);
    for (const auto& s : slots) s.binding->accumulate_into(result.gradients);
  }

  double ar = 0, target = 0, traj = 0, score = 0, kjp = 0, kp = 0, total = 0;
  for (const auto& s : slots) {
    const auto& l = s.forward.losses;
    ar += inv * item_or_zero(l.ar);
    target += inv * item_or_zero(l.target);
    traj += inv * item_or_zero(l.traj);
    score += inv * item_or_zero(l.score);
    kjp += inv * item_or_zero(l.kjp);
    kp += inv * item_or_zero(l.kp);
    total += inv * s.loss.item();
    result.p_complete.push_back(s.forward.p_complete);
  }
  result.total = total + config.weights.kcl * kcl;
  auto c = [](double v) { return Value::scalar(v); };
  result.means = {c(ar), c(target), c(traj), c(score), c(kjp), c(kp), c(kcl)};
  return result;
}

namespace {

struct Adam {
  explicit Adam(const ad::ParamStore& store) : m(ad::zero_gradients(store)), v(ad::zero_gradients(store)) {}

  void step(ad::ParamStore& store, const ad::GradientSet& g, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t p = 0; p < g.size(); ++p) {
      auto& data = store.tensor(p).data;
      for (std::size_t i = 0; i < data.size(); ++i) {
        m[p][i] = b1 * m[p][i] + (1.0 - b1) * g[p][i];
        v[p][i] = b2 * v[p][i] + (1.0 - b2) * g[p][i] * g[p][i];
        data[i] -= lr * (m[p][i] / c1) / (std::sqrt(v[p][i] / c2) + eps);
      }
    }
  }

  ad::GradientSet m, v;
  std::uint64_t t = 0;
};

struct EpochSums {
  double ar = 0, target = 0, traj = 0, score = 0, kjp = 0, kp = 0, kcl = 0, total = 0;
  std::size_t count = 0;

  void add(const BatchResult& r, std::size_t n) {
    const double w = static_cast<double>(n);
    ar += w * r.means.ar.item();
    target += w * r.means.target.item();
    traj += w * r.means.traj.item();
    score += w * r.means.score.item();
    kjp += w * r.means.kjp.item();
    kp += w * r.means.kp.item();
    kcl += w * r.means.kcl.item();
    total += w * r.total;
    count += n;
  }
};

std::vector<std::vector<std::size_t>> chunk(const std::vector<std::size_t>& order, std::size_t size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + size)));
  }
  return out;
}

}  // namespace

TrainResult train(const scenario::Dataset& dataset, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  const auto& scenes = dataset.scenes;
  if (scenes.empty()) throw std::invalid_argument("train: dataset is empty");

  ad::ParamStore store = make_model(config.model(), config.seed);
  const auto held = validation_split(scenes, config.validation_fraction, config.seed);
  std::vector<std::size_t> train_idx;
  for (std::size_t i = 0, h = 0; i < scenes.size(); ++i) {
    if (h < held.size() && held[h] == i) {
      ++h;
    } else {
      train_idx.push_back(i);
    }
  }
  if (train_idx.empty()) throw std::invalid_argument("train: validation split leaves no training scenes");

  Adam adam(store);
  TrainLog log;
  ad::ParamStore best = store;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0, since_best = 0;
  double best_val_acc = std::numeric_limits<double>::quiet_NaN();
  bool stopped_early = false;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr_schedule(epoch, config);

    std::vector<std::size_t> order = train_idx;
    std::mt19937_64 rng(scenario::scene_seed(config.seed ^ kShuffleSalt, epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    EpochSums sums;
    for (const auto& batch : chunk(order, config.batch_size)) {
      BatchResult r;
      try {
        r = batch_gradients(store, scenes, batch, dataset.skeleton, config, epoch);
      } catch (const NonFiniteLoss& e) {
        throw TrainingDiverged(fmt::format("epoch {}: {}", epoch, e.what()), store, log);
      }
      const double norm = ad::global_norm(r.gradients);
      if (!std::isfinite(r.total) || !std::isfinite(norm)) {
        throw TrainingDiverged(fmt::format("epoch {}: non-finite total loss or gradient", epoch), store, log);
      }
      if (norm > config.clip_norm) {
        const double f = config.clip_norm / norm;
        for (auto& g : r.gradients) {
          for (double& x : g) x *= f;
        }
      }
      adam.step(store, r.gradients, rec.lr);
      sums.add(r, batch.size());
      log.floored_norms += r.floored_norms;
    }
    const double n = static_cast<double>(sums.count);
    rec.ar = sums.ar / n;
    rec.target = sums.target / n;
    rec.traj = sums.traj / n;
    rec.score = sums.score / n;
    rec.kjp = sums.kjp / n;
    rec.kp = sums.kp / n;
    rec.kcl = sums.kcl / n;
    rec.total = sums.total / n;
    rec.val_total = std::numeric_limits<double>::quiet_NaN();

    if (!held.empty()) {
      EpochSums val;
      std::size_t correct = 0;
      for (const auto& batch : chunk(held, config.batch_size)) {
        const auto r = batch_gradients(store, scenes, batch, dataset.skeleton, config, epoch, false);
        val.add(r, batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
          correct += static_cast<std::size_t>((r.p_complete[i] >= 0.5) == (scenes[batch[i]].crossing_label == 1));
        }
      }
      rec.val_total = val.total / static_cast<double>(val.count);
      if (rec.val_total < best_val) {
        best_val = rec.val_total;
        best = store;
        best_epoch = epoch;
        best_val_acc = static_cast<double>(correct) / static_cast<double>(held.size());
        since_best = 0;
      } else {
        ++since_best;
      }
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (!held.empty() && since_best >= config.patience) {
      stopped_early = true;
      break;
    }
  }

  if (!held.empty()) {
    store = best;
    log.final_metrics["best_epoch"] = static_cast<double>(best_epoch);
    log.final_metrics["best_val_total"] = best_val;
    log.final_metrics["val_accuracy"] = best_val_acc;
  }
  log.final_metrics["final_train_total"] = log.epochs.back().total;
  log.final_metrics["epochs_run"] = static_cast<double>(log.epochs.size());
  log.final_metrics["stopped_early"] = stopped_early ? 1.0 : 0.0;
  return {std::move(store), std::move(log)};
}

// ---- Checkpoints ---------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'K', 'P', 'X', 'F'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw CheckpointError("checkpoint: truncated file");
  return v;
}

std::string get_string(std::istream& in, std::size_t max) {
  const auto len = get<std::uint32_t>(in);
  if (len > max) throw CheckpointError("checkpoint: corrupt string length");
  std::string s(len, '\0');
  if (!in.read(s.data(), len)) throw CheckpointError("checkpoint: truncated file");
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ModelConfig& model, const ad::ParamStore& params) {
  const std::string config = to_json(model).dump();
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, ad::hash_combine(0, config));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(config.size()));
  out.write(config.data(), static_cast<std::streamsize>(config.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.count()));
  for (std::size_t i = 0; i < params.count(); ++i) {
    const auto& name = params.name(i);
    const auto& t = params.tensor(i);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  if (!out) throw CheckpointError("checkpoint: write failed");
}

void write_checkpoint_file(const std::string& path, const ModelConfig& model, const ad::ParamStore& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("checkpoint: cannot open " + path + " for writing");
  write_checkpoint(out, model, params);
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, sizeof magic)) throw CheckpointError("checkpoint: truncated file");
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw IncompatibleCheckpoint("checkpoint: bad magic");
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw IncompatibleCheckpoint(fmt::format("checkpoint: version {} (expected {})", version, kCheckpointVersion));
  }
  const auto digest = get<std::uint64_t>(in);
  const std::string config = get_string(in, 1 << 20);
  if (ad::hash_combine(0, config) != digest) throw IncompatibleCheckpoint("checkpoint: config digest mismatch");

  Checkpoint ck;
  try {
    ck.model = model_config_from_json(nlohmann::json::parse(config));
  } catch (const std::exception& e) {
    throw IncompatibleCheckpoint(std::string("checkpoint: bad model config: ") + e.what());
  }
  if (to_json(ck.model).dump() != config) throw IncompatibleCheckpoint("checkpoint: non-canonical model config");

  // Layout must match what this build registers for the stored config.
  ck.params = make_model(ck.model, 0);
  const auto count = get<std::uint32_t>(in);
  if (count != ck.params.count()) {
    throw IncompatibleCheckpoint(fmt::format("checkpoint: {} parameters (expected {})", count, ck.params.count()));
  }
  for (std::size_t i = 0; i < count; ++i) {
    const std::string name = get_string(in, 4096);
    auto& t = ck.params.tensor(i);
    if (name != ck.params.name(i)) {
      throw IncompatibleCheckpoint(fmt::format("checkpoint: parameter {} is {} (expected {})", i, name, ck.params.name(i)));
    }
    const auto rank = get<std::uint32_t>(in);
    ad::Shape shape;
    for (std::uint32_t r = 0; r < std::min<std::uint32_t>(rank, 8); ++r) shape.push_back(get<std::uint64_t>(in));
    if (shape != t.shape) {
      throw IncompatibleCheckpoint(fmt::format("checkpoint: {} has shape {} (expected {})", name,
                                               ad::shape_string(shape), ad::shape_string(t.shape)));
    }
    if (!in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(double)))) {
      throw CheckpointError("checkpoint: truncated file");
    }
  }
  return ck;
}

Checkpoint read_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace kpx::training
