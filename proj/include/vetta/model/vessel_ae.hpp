#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vetta/geom/fourier.hpp"
#include "vetta/geom/vessel.hpp"
#include "vetta/nn/checkpoint.hpp"
#include "vetta/nn/layers.hpp"
#include "vetta/nn/optim.hpp"

namespace vetta::model {

inline constexpr std::size_t kVesselLatentDim = 64;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct VesselAeConfig {
  std::size_t model_dim = 256;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t mlp_hidden = 512;
  std::size_t decoder_hidden = 512;
  std::size_t samples = 64;
  std::size_t resample_points = 128;
  double sensitivity = 0.75;
  double curvature_sigma = 2.0;
  double noise_std = 0.05;
  double alpha = 0.3;
  double position_weight = 1.0;
  double radius_weight = 0.01;
  geom::FourierConfig fourier;

  void validate() const;
  std::size_t input_width() const { return 4 * fourier.width_per_axis() + 1; }
};

nlohmann::json to_json(const VesselAeConfig& c);
VesselAeConfig vessel_config_from_json(const nlohmann::json& j);

/// One encoder sample: x, y, z, r, t in the normalized vessel frame.
using VesselSample = std::array<double, 5>;

/// A vessel prepared for training: normalized, resampled by arc length,
/// with its curvature segments and original-unit lengths.
struct PreparedVessel {
  geom::NormalizedVessel vessel;
  std::vector<double> t;  // arc parameter per resampled point
  std::vector<geom::Segment> segments;  // over interior points 1..n-2
  double arc_length = 0;  // d_a, original units
  double endpoint_distance = 0;  // d_e, original units
};

PreparedVessel prepare_vessel(const geom::PolylineVessel& v, const VesselAeConfig& cfg);

/// One point per curvature segment: a uniformly random index when `seed` is
/// given, the segment midpoint otherwise. Ordered by t.
std::vector<VesselSample> sample_training_points(const PreparedVessel& v, std::optional<std::uint64_t> seed);

class VesselAe {
 public:
  explicit VesselAe(VesselAeConfig cfg);

  template <class T>
  void init(nn::ParamStore<T>& ps, nn::Rng& rng) const;

  /// inputs: [B, N, input_width] -> z_v [B, 64].
  template <class T>
  nn::Var<T> encode(nn::ParamStore<T>& ps, const nn::Tensor<T>& inputs) const;

  /// z [B, 64] and lifted t [B, N, 2 * octaves] -> residual f_d [B, N, 4].
  template <class T>
  nn::Var<T> residual(nn::ParamStore<T>& ps, const nn::Var<T>& z, const nn::Tensor<T>& t_lifted) const;

  const VesselAeConfig& config() const { return cfg_; }

 private:
  VesselAeConfig cfg_;
  nn::Mlp2 input_;
  nn::TransformerEncoder encoder_;
  nn::Mlp2 output_;
  nn::Mlp2 decoder_;
};

/// Lifted (x, y, z, t) followed by raw r, one row per sample.
template <class T>
nn::Tensor<T> vessel_encoder_inputs(const std::vector<std::vector<VesselSample>>& batch, const VesselAeConfig& cfg);

template <class T>
nn::Tensor<T> lift_t(const std::vector<std::vector<double>>& ts, const geom::FourierConfig& fourier);

std::vector<double> encode_vessel(const VesselAe& model, nn::ParamStore<float>& ps,
                                  const std::vector<VesselSample>& samples);

/// Decoded points in the normalized frame with endpoints a and b.
std::vector<geom::Point4> decode_vessel(const VesselAe& model, nn::ParamStore<float>& ps,
                                        const std::vector<double>& z_v, const geom::Point4& a,
                                        const geom::Point4& b, const std::vector<double>& ts,
                                        geom::MaskMode mode);

/// Loss weight alpha * d_a / sqrt(d_e).
double vessel_weight(double arc_length, double endpoint_distance, double alpha);

struct VesselBatch {
  std::vector<std::vector<VesselSample>> samples;
  std::vector<geom::Point4> start, end;  // normalized endpoints
  std::vector<double> weights;
};

VesselBatch make_vessel_batch(const std::vector<PreparedVessel>& data, const std::vector<std::size_t>& index,
                              const VesselAeConfig& cfg, std::optional<std::uint64_t> sample_seed);

/// Mean over the batch of weight * (pos_w * position MSE + r_w * radius MSE),
/// training-mode mask, targets = the encoder samples. `noise` (B x 64) is
/// added to z_v; pass an empty tensor for none.
template <class T>
nn::Var<T> vessel_loss(const VesselAe& model, nn::ParamStore<T>& ps, const VesselBatch& batch,
                       const nn::Tensor<T>& noise);

struct VesselEval {
  double mse = 0;  // eval-mode reconstruction, all four components
  double baseline_mse = 0;  // f_d = 0, i.e. straight interpolation
};

VesselEval evaluate_vessels(const VesselAe& model, nn::ParamStore<float>& ps, const std::vector<PreparedVessel>& data);

struct TrainSchedule {
  std::uint64_t steps = 5000;
  std::size_t batch = 64;
  nn::Schedule lr{3e-4, 200, 5000, 10.0};
  nn::AdamWHyper adamw;
  std::uint64_t log_interval = 50;
  std::uint64_t checkpoint_interval = 1000;
  std::uint64_t seed = 0;
  std::size_t steps_per_tree = 1;  // tree training: decoding steps drawn per sampled tree
};

nlohmann::json to_json(const TrainSchedule& s);
TrainSchedule schedule_from_json(const nlohmann::json& j, TrainSchedule defaults = {});

struct LogRow {
  std::uint64_t step = 0;
  double lr = 0;
  double loss = 0;
  std::vector<double> extra;  // model-specific components
};

struct TrainHooks {
  std::function<void(const LogRow&)> on_log;
  /// Called with (step, params, optimizer) when a checkpoint is due.
  std::function<void(std::uint64_t, const nn::ParamStore<float>&, const nn::OptState<float>&)> on_checkpoint;
};

class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, std::uint64_t step) : std::runtime_error(what), step_(step) {}
  std::uint64_t step() const { return step_; }

 private:
  std::uint64_t step_;
};

/// Runs steps [opt.step, schedule.steps). Fresh runs pass empty params and
/// opt; resumed runs pass the loaded checkpoint state. Every step draws its
/// batch and noise from derive_seed(seed, step), so a resumed run repeats
/// the uninterrupted one exactly.
void train_vessel_ae(const VesselAe& model, const std::vector<PreparedVessel>& data, const TrainSchedule& schedule,
                     nn::ParamStore<float>& ps, nn::OptState<float>& opt, const TrainHooks& hooks = {});

}  // namespace vetta::model
