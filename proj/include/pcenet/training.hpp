#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pcenet/degradation.hpp"
#include "pcenet/network.hpp"
#include "pcenet/objectives.hpp"
#include "pcenet/rng.hpp"

namespace pcenet::training {

struct TrainConfig {
  int epochs = 200;
  int decay_start_epoch = 150;
  double base_lr = 1e-3;
  int batch_size = 16;  // SeqLC groups per step
  double lambda_C = objectives::kDefaultLambdaC;
  int K = 2;
  std::uint64_t seed = 0;
  int side = 256;
  int L = 4;
  int base_channels = 64;
  int channel_cap = 512;
  int checkpoint_every = 10;
  int workers = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
  network::ModelConfig model_config() const;
};

/// base_lr before decay_start_epoch, then linear decay reaching 0 at epoch == epochs.
double lr_schedule(int epoch, const TrainConfig& cfg);

struct AdamState {
  network::Parameters m;
  network::Parameters v;
  long long step = 0;
};

void adam_update(network::Parameters& params, const network::Parameters& grads, AdamState& state, double lr,
                 const TrainConfig& cfg);

struct Sample {
  std::string id;
  Image clean;
};

/// Losses and parameter gradients for a batch of SeqLCs without updating
/// anything. Gradients are averaged over the batch.
objectives::LossReport compute_batch_gradients(const network::PyramidUNet& model,
                                               const std::vector<degradation::SeqLC>& batch, double lambda_C,
                                               network::Parameters* grads);

/// Same as compute_batch_gradients but without gradients (evaluation).
objectives::LossReport evaluate_batch(const network::PyramidUNet& model, const std::vector<degradation::SeqLC>& batch,
                                      double lambda_C);

struct StepRecord {
  int epoch = 0;
  long long step = 0;  // global
  double lr = 0.0;
  objectives::LossReport losses;
};

nlohmann::json to_json(const StepRecord& r);

/// Owns model parameters, optimizer state and the data-order RNG.
class Trainer {
 public:
  Trainer(TrainConfig cfg, degradation::DegradationConfig degradation);

  const TrainConfig& config() const { return cfg_; }
  const degradation::DegradationConfig& degradation_config() const { return degradation_; }
  network::PyramidUNet& model() { return model_; }
  const network::PyramidUNet& model() const { return model_; }
  const AdamState& optimizer() const { return adam_; }
  int epoch() const { return epoch_; }
  long long global_step() const { return step_; }
  Rng& rng() { return rng_; }

  /// Degradation settings for a given epoch: the seed mixes the epoch index
  /// so recipes differ across epochs.
  degradation::DegradationConfig epoch_degradation(int epoch) const;

  /// Builds the SeqLCs for the given samples at the given epoch.
  std::vector<degradation::SeqLC> make_batch(const std::vector<const Sample*>& samples, int epoch) const;

  /// One optimizer update on a prepared batch at the given learning rate.
  objectives::LossReport train_step(const std::vector<degradation::SeqLC>& batch, double lr,
                                    const std::vector<std::string>& ids = {});

  /// Runs one epoch over the corpus (shuffled by the trainer RNG) and
  /// advances the epoch counter. Returns one record per step.
  std::vector<StepRecord> run_epoch(const std::vector<Sample>& corpus,
                                    const std::function<void(const StepRecord&)>& on_step = {});

  void save_checkpoint(const std::filesystem::path& path) const;
  /// Replaces parameters, optimizer state, epoch and RNG state. The stored
  /// model configuration must match this trainer's.
  void load_checkpoint(const std::filesystem::path& path);

 private:
  TrainConfig cfg_;
  degradation::DegradationConfig degradation_;
  network::PyramidUNet model_;
  AdamState adam_;
  Rng rng_;
  int epoch_ = 0;
  long long step_ = 0;
};

struct TrainOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume;
  std::function<void(const StepRecord&)> on_step;
};

struct TrainResult {
  std::filesystem::path checkpoint;
  std::vector<double> epoch_mean_total;  // mean L_total per epoch run in this call
};

inline constexpr const char* kFinalCheckpointName = "model_final.ckpt";
inline constexpr const char* kLastCheckpointName = "checkpoint_last.ckpt";
inline constexpr const char* kMetricsLogName = "metrics.jsonl";

/// Full protocol: epochs x steps, checkpoints every cfg.checkpoint_every
/// epochs and at the end, one JSON line per step in out_dir/metrics.jsonl.
TrainResult train_loop(const std::vector<Sample>& corpus, const TrainConfig& cfg,
                       const degradation::DegradationConfig& degradation, const TrainOptions& options);

}  // namespace pcenet::training
