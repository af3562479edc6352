#ifndef KPX_TRAINING_TRAINER_HPP_
#define KPX_TRAINING_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "kpx/autodiff/params.hpp"
#include "kpx/scenario/dataset_io.hpp"
#include "kpx/training/model.hpp"

namespace kpx::training {

struct TrainConfig {
  LossWeights weights;
  std::size_t batch_size = 32;
  std::size_t epochs = 15;
  double initial_lr = 0.01;
  std::size_t warmup_epochs = 6;
  double decay_factor = 0.9;
  std::size_t decay_every_epochs = 6;
  int segments = 4;
  double beta = 1.0;
  std::uint64_t seed = 0;

  // Fraction of scenes held out (stratified by label) for early stopping.
  // Zero trains on everything and never stops early.
  double validation_fraction = 0.1;
  std::size_t patience = 3;
  double clip_norm = 5.0;
  std::size_t threads = 1;
  bool zero_keypoints = false;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  ModelConfig model() const;
};

nlohmann::json to_json(const TrainConfig& config);
/// Fields missing from `j` keep their values from `base`; unknown fields throw.
TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& base = {});

double lr_schedule(std::size_t epoch, const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double ar = 0.0;
  double target = 0.0;
  double traj = 0.0;
  double score = 0.0;
  double kjp = 0.0;
  double kp = 0.0;
  double kcl = 0.0;
  double total = 0.0;
  double val_total = 0.0;  // NaN without a validation split
  double wall_seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::map<std::string, double> final_metrics;
  std::size_t floored_norms = 0;
};

void write_train_log_csv(std::ostream& out, const TrainLog& log);

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, ad::ParamStore last_good, TrainLog log)
      : std::runtime_error(what), last_good_(std::move(last_good)), log_(std::move(log)) {}
  const ad::ParamStore& last_good() const { return last_good_; }
  const TrainLog& log() const { return log_; }

 private:
  ad::ParamStore last_good_;
  TrainLog log_;
};

struct TrainResult {
  ad::ParamStore params;
  TrainLog log;
};

/// Indices of the held-out scenes, stratified by crossing label. Sorted.
std::vector<std::size_t> validation_split(const std::vector<scenario::Scene>& scenes, double fraction,
                                          std::uint64_t seed);

/// Gradient of the batch objective for `batch` (dataset indices), computed
/// with one graph per example. Contributions are reduced in ascending index
/// order, so the result does not depend on the order of `batch`.
struct BatchResult {
  ad::GradientSet gradients;
  double total = 0.0;
  LossComponents means;  // constant scalars, for logging
  std::vector<double> p_complete;  // per example in ascending index order
  std::size_t floored_norms = 0;
};

BatchResult batch_gradients(const ad::ParamStore& store, const std::vector<scenario::Scene>& scenes,
                            std::vector<std::size_t> batch, const skeleton::SkeletonSpec& spec,
                            const TrainConfig& config, std::size_t epoch, bool with_gradients = true);

/// Permutation draws of one example in one epoch.
AuxDraw example_draw(const TrainConfig& config, std::size_t epoch, std::size_t example);

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const scenario::Dataset& dataset, const TrainConfig& config, const EpochCallback& on_epoch = {});

// ---- Checkpoints ---------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
/// The file is a checkpoint but does not match this build or its own header.
class IncompatibleCheckpoint : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

struct Checkpoint {
  ModelConfig model;
  ad::ParamStore params;
};

void write_checkpoint(std::ostream& out, const ModelConfig& model, const ad::ParamStore& params);
void write_checkpoint_file(const std::string& path, const ModelConfig& model, const ad::ParamStore& params);
Checkpoint read_checkpoint(std::istream& in);
Checkpoint read_checkpoint_file(const std::string& path);

}  // namespace kpx::training

#endif  // KPX_TRAINING_TRAINER_HPP_
