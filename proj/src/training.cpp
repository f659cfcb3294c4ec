#include "pcenet/training.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include "pcenet/checkpoint.hpp"
#include "pcenet/errors.hpp"
#include "pcenet/pyramid.hpp"

namespace pcenet::training {
namespace {

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"decay_start_epoch", c.decay_start_epoch},
          {"base_lr", c.base_lr},
          {"batch_size", c.batch_size},
          {"lambda_C", c.lambda_C},
          {"K", c.K},
          {"seed", c.seed},
          {"side", c.side},
          {"L", c.L},
          {"base_channels", c.base_channels},
          {"channel_cap", c.channel_cap},
          {"checkpoint_every", c.checkpoint_every},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps}};
}

nlohmann::json degradation_config_to_json(const degradation::DegradationConfig& d) {
  auto range = [](const degradation::Range& r) { return nlohmann::json::array({r.lo, r.hi}); };
  return {{"enable_blur", d.enable_blur},
          {"enable_artifact", d.enable_artifact},
          {"enable_transmission", d.enable_transmission},
          {"blur_sigma_range", range(d.blur_sigma_range)},
          {"artifact_count_range", range(d.artifact_count_range)},
          {"artifact_radius_range", range(d.artifact_radius_range)},
          {"artifact_strength_range", range(d.artifact_strength_range)},
          {"transmission_gamma_range", range(d.transmission_gamma_range)},
          {"transmission_gain_range", range(d.transmission_gain_range)},
          {"transmission_field_range", range(d.transmission_field_range)},
          {"illumination_field_scale", d.illumination_field_scale},
          {"seed", d.seed}};
}

bool all_finite(const objectives::LossReport& r) {
  if (!std::isfinite(r.L_E) || !std::isfinite(r.L_C) || !std::isfinite(r.L_total)) return false;
  for (double v : r.L_C_per_layer)
    if (!std::isfinite(v)) return false;
  return true;
}

objectives::LossReport batch_impl(const network::PyramidUNet& model, const std::vector<degradation::SeqLC>& batch,
                                  double lambda_C, network::Parameters* grads) {
  if (batch.empty()) throw ParameterError("empty batch");
  const int L = model.config().depth - 1;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double sum_e = 0.0;
  std::vector<double> sum_layers(model.config().depth, 0.0);

  for (const auto& seq : batch) {
    const int K = seq.K();
    if (K < 1) throw ParameterError("SeqLC without variants");
    std::vector<network::ForwardCache> caches(grads ? K : 0);
    std::vector<Raster> outputs;
    std::vector<network::FeatureTaps> taps;
    outputs.reserve(K);
    taps.reserve(K);
    for (int k = 0; k < K; ++k) {
      const auto stack = pyramid::laplacian_decompose(seq.variants[k].pixels, L);
      auto result = model.forward(stack, grads ? &caches[k] : nullptr);
      outputs.push_back(std::move(result.enhanced));
      taps.push_back(std::move(result.taps));
    }

    std::vector<Raster> output_grads;
    const double le = grads ? objectives::enhancement_loss(seq.clean.pixels, outputs, output_grads)
                            : objectives::enhancement_loss(seq.clean.pixels, outputs);
    const bool tap_grads = grads && lambda_C > 0.0 && K > 1;
    const auto fpc = objectives::fpc_loss(taps, tap_grads);
    sum_e += le;
    for (std::size_t l = 0; l < fpc.per_layer.size(); ++l) sum_layers[l] += fpc.per_layer[l];

    if (!grads) continue;
    for (int k = 0; k < K; ++k) {
      output_grads[k] *= inv_b;
      std::vector<Raster> g_taps;
      if (tap_grads) {
        g_taps = fpc.tap_grads[k];
        for (auto& g : g_taps) g *= lambda_C * inv_b;
      }
      model.backward(caches[k], output_grads[k], g_taps, *grads);
    }
  }

  for (double& v : sum_layers) v *= inv_b;
  const double lc = std::accumulate(sum_layers.begin(), sum_layers.end(), 0.0);
  return objectives::total_loss(sum_e * inv_b, lc, lambda_C, std::move(sum_layers));
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ParameterError("epochs must be >= 1");
  if (!(decay_start_epoch > 0 && decay_start_epoch <= epochs)) {
    throw ParameterError("decay_start_epoch must satisfy 0 < decay_start_epoch <= epochs");
  }
  if (!(base_lr > 0)) throw ParameterError("base_lr must be > 0");
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
  if (K < 1) throw ParameterError("K must be >= 1");
  if (!(lambda_C >= 0)) throw ParameterError("lambda_C must be >= 0");
  if (L < 1) throw ParameterError("L must be >= 1");
  if (side < 1 || side % (1 << L) != 0) throw ParameterError("side must be divisible by 2^L");
  if (checkpoint_every < 0) throw ParameterError("checkpoint_every must be >= 0");
  if (workers < 1) throw ParameterError("workers must be >= 1");
  model_config().validate();
}

network::ModelConfig TrainConfig::model_config() const {
  network::ModelConfig m;
  m.depth = L + 1;
  m.base_channels = base_channels;
  m.channel_cap = channel_cap;
  return m;
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch > cfg.epochs) {
    throw ParameterError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs) + "]");
  }
  if (epoch < cfg.decay_start_epoch) return cfg.base_lr;
  return cfg.base_lr * (cfg.epochs - epoch) / (cfg.epochs - cfg.decay_start_epoch);
}

void adam_update(network::Parameters& params, const network::Parameters& grads, AdamState& state, double lr,
                 const TrainConfig& cfg) {
  if (state.m.tensors().empty()) {
    state.m = params.zeros_like();
    state.v = params.zeros_like();
  }
  ++state.step;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  auto& pt = params.tensors();
  for (std::size_t t = 0; t < pt.size(); ++t) {
    auto& w = pt[t].values;
    const auto& g = grads.tensors()[t].values;
    auto& m = state.m.tensors()[t].values;
    auto& v = state.v.tensors()[t].values;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.adam_eps);
    }
  }
}

objectives::LossReport compute_batch_gradients(const network::PyramidUNet& model,
                                               const std::vector<degradation::SeqLC>& batch, double lambda_C,
                                               network::Parameters* grads) {
  return batch_impl(model, batch, lambda_C, grads);
}

objectives::LossReport evaluate_batch(const network::PyramidUNet& model, const std::vector<degradation::SeqLC>& batch,
                                      double lambda_C) {
  return batch_impl(model, batch, lambda_C, nullptr);
}

nlohmann::json to_json(const StepRecord& r) {
  nlohmann::json j = objectives::to_json(r.losses);
  j["epoch"] = r.epoch;
  j["step"] = r.step;
  j["lr"] = r.lr;
  return j;
}

namespace {

network::ModelConfig validated_model_config(const TrainConfig& cfg) {
  cfg.validate();
  return cfg.model_config();
}

}  // namespace

Trainer::Trainer(TrainConfig cfg, degradation::DegradationConfig degradation)
    : cfg_(cfg),
      degradation_(degradation),
      model_(validated_model_config(cfg)),
      rng_(mix_seed(cfg.seed, 0x7261696EULL)) {
  degradation_.validate();
  model_.initialize(mix_seed(cfg_.seed, 0x696E6974ULL));
}

degradation::DegradationConfig Trainer::epoch_degradation(int epoch) const {
  degradation::DegradationConfig d = degradation_;
  d.seed = mix_seed(degradation_.seed ^ cfg_.seed, static_cast<std::uint64_t>(epoch));
  return d;
}

std::vector<degradation::SeqLC> Trainer::make_batch(const std::vector<const Sample*>& samples, int epoch) const {
  const auto d = epoch_degradation(epoch);
  std::vector<degradation::SeqLC> batch(samples.size());
  auto build = [&](std::size_t i) { batch[i] = degradation::make_seqlc(samples[i]->clean, d, cfg_.K, samples[i]->id); };
  const auto workers = static_cast<std::size_t>(std::max(1, cfg_.workers));
  if (workers == 1 || samples.size() < 2) {
    for (std::size_t i = 0; i < samples.size(); ++i) build(i);
    return batch;
  }
  // Each SeqLC depends only on its own (seed, id, k) stream, so the split
  // across threads does not affect the result.
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < samples.size(); i += workers) build(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return batch;
}

objectives::LossReport Trainer::train_step(const std::vector<degradation::SeqLC>& batch, double lr,
                                           const std::vector<std::string>& ids) {
  network::Parameters grads = model_.parameters().zeros_like();
  auto report = batch_impl(model_, batch, cfg_.lambda_C, &grads);
  if (!all_finite(report)) {
    std::string which;
    for (const auto& id : ids) which += (which.empty() ? "" : ",") + id;
    throw NumericError("non-finite loss at step " + std::to_string(step_) + " (batch ids: " +
                       (which.empty() ? "<unnamed>" : which) + ")");
  }
  adam_update(model_.parameters(), grads, adam_, lr, cfg_);
  ++step_;
  return report;
}

std::vector<StepRecord> Trainer::run_epoch(const std::vector<Sample>& corpus,
                                           const std::function<void(const StepRecord&)>& on_step) {
  if (corpus.empty()) throw ConfigError("training corpus is empty");
  const int epoch = epoch_;
  const double lr = lr_schedule(epoch, cfg_);

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng_.uniform_int(0, static_cast<long long>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }

  std::vector<StepRecord> records;
  for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg_.batch_size));
    std::vector<const Sample*> samples;
    std::vector<std::string> ids;
    for (std::size_t i = start; i < end; ++i) {
      samples.push_back(&corpus[order[i]]);
      ids.push_back(corpus[order[i]].id);
    }
    const auto batch = make_batch(samples, epoch);
    StepRecord rec;
    rec.epoch = epoch;
    rec.step = step_;
    rec.lr = lr;
    rec.losses = train_step(batch, lr, ids);
    if (on_step) on_step(rec);
    records.push_back(std::move(rec));
  }
  ++epoch_;
  return records;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  checkpoint::Checkpoint ckpt;
  ckpt.model = model_.config();
  ckpt.pyramid_levels = cfg_.L;
  ckpt.train_config = train_config_to_json(cfg_);
  ckpt.degradation_config = degradation_config_to_json(degradation_);
  ckpt.params = model_.parameters();
  ckpt.adam_m = adam_.m;
  ckpt.adam_v = adam_.v;
  ckpt.adam_step = adam_.step;
  ckpt.epoch = epoch_;
  ckpt.global_step = step_;
  ckpt.rng_state = rng_.state();
  checkpoint::write_checkpoint(ckpt, path);
}

void Trainer::load_checkpoint(const std::filesystem::path& path) {
  auto ckpt = checkpoint::read_checkpoint(path);
  if (!(ckpt.model == model_.config())) throw ConfigError("checkpoint model configuration does not match");
  if (ckpt.params.tensors().size() != model_.parameters().tensors().size()) {
    throw FormatError("checkpoint parameter layout does not match the model");
  }
  for (std::size_t i = 0; i < ckpt.params.tensors().size(); ++i) {
    const auto& a = ckpt.params.tensors()[i];
    const auto& b = model_.parameters().tensors()[i];
    if (a.name != b.name || a.shape != b.shape) throw FormatError("checkpoint tensor mismatch at " + b.name);
  }
  model_.parameters() = std::move(ckpt.params);
  adam_.m = std::move(ckpt.adam_m);
  adam_.v = std::move(ckpt.adam_v);
  adam_.step = ckpt.adam_step;
  epoch_ = ckpt.epoch;
  step_ = ckpt.global_step;
  if (!ckpt.rng_state.empty()) rng_.set_state(ckpt.rng_state);
}

TrainResult train_loop(const std::vector<Sample>& corpus, const TrainConfig& cfg,
                       const degradation::DegradationConfig& degradation, const TrainOptions& options) {
  if (corpus.empty()) throw ConfigError("training corpus is empty");
  Trainer trainer(cfg, degradation);
  if (options.resume) trainer.load_checkpoint(*options.resume);

  std::filesystem::create_directories(options.out_dir);
  std::ofstream metrics(options.out_dir / kMetricsLogName, std::ios::app);
  if (!metrics) throw IoError("cannot open metrics log in " + options.out_dir.string());

  TrainResult result;
  while (trainer.epoch() < cfg.epochs) {
    const auto records = trainer.run_epoch(corpus, [&](const StepRecord& r) {
      metrics << to_json(r).dump() << '\n';
      metrics.flush();
      if (options.on_step) options.on_step(r);
    });
    double sum = 0.0;
    for (const auto& r : records) sum += r.losses.L_total;
    result.epoch_mean_total.push_back(sum / static_cast<double>(records.size()));
    if (cfg.checkpoint_every > 0 && trainer.epoch() % cfg.checkpoint_every == 0 && trainer.epoch() < cfg.epochs) {
      trainer.save_checkpoint(options.out_dir / kLastCheckpointName);
    }
  }
  result.checkpoint = options.out_dir / kFinalCheckpointName;
  trainer.save_checkpoint(result.checkpoint);
  return result;
}

}  // namespace pcenet::training
