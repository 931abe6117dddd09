#include "vetta/model/vessel_ae.hpp"

#include <algorithm>
#include <cmath>

#include "vetta/geom/curve.hpp"

namespace vetta::model {

using nlohmann::json;

void VesselAeConfig::validate() const {
  fourier.validate();
  if (model_dim == 0 || layers == 0 || heads == 0 || mlp_hidden == 0 || decoder_hidden == 0)
    throw ConfigError("vessel config: sizes must be positive");
  if (model_dim % heads != 0) throw ConfigError("vessel config: model_dim must be divisible by heads");
  if (samples == 0) throw ConfigError("vessel config: samples must be positive");
  if (resample_points < samples + 2)
    throw ConfigError("vessel config: resample_points must be at least samples + 2");
  if (!(sensitivity > 0)) throw ConfigError("vessel config: sensitivity must be positive");
  if (!(curvature_sigma >= 0)) throw ConfigError("vessel config: curvature_sigma must be non-negative");
  if (!(noise_std >= 0)) throw ConfigError("vessel config: noise_std must be non-negative");
  if (!(alpha > 0) || !(position_weight >= 0) || !(radius_weight >= 0))
    throw ConfigError("vessel config: loss weights out of range");
}

json to_json(const VesselAeConfig& c) {
  return json{{"model_dim", c.model_dim},
              {"layers", c.layers},
              {"heads", c.heads},
              {"mlp_hidden", c.mlp_hidden},
              {"decoder_hidden", c.decoder_hidden},
              {"samples", c.samples},
              {"resample_points", c.resample_points},
              {"sensitivity", c.sensitivity},
              {"curvature_sigma", c.curvature_sigma},
              {"noise_std", c.noise_std},
              {"alpha", c.alpha},
              {"position_weight", c.position_weight},
              {"radius_weight", c.radius_weight},
              {"octaves", c.fourier.octaves}};
}

VesselAeConfig vessel_config_from_json(const json& j) {
  VesselAeConfig c;
  if (!j.is_object()) throw ConfigError("vessel config: expected an object");
  try {
    c.model_dim = j.value("model_dim", c.model_dim);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
    c.decoder_hidden = j.value("decoder_hidden", c.decoder_hidden);
    c.samples = j.value("samples", c.samples);
    c.resample_points = j.value("resample_points", c.resample_points);
    c.sensitivity = j.value("sensitivity", c.sensitivity);
    c.curvature_sigma = j.value("curvature_sigma", c.curvature_sigma);
    c.noise_std = j.value("noise_std", c.noise_std);
    c.alpha = j.value("alpha", c.alpha);
    c.position_weight = j.value("position_weight", c.position_weight);
    c.radius_weight = j.value("radius_weight", c.radius_weight);
    c.fourier.octaves = j.value("octaves", c.fourier.octaves);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("vessel config: ") + e.what());
  }
  c.validate();
  return c;
}

PreparedVessel prepare_vessel(const geom::PolylineVessel& v, const VesselAeConfig& cfg) {
  v.validate();
  PreparedVessel p;
  p.arc_length = v.arc_length();
  p.endpoint_distance = v.endpoint_distance();
  p.vessel = geom::normalize_vessel(v);
  p.vessel.points = geom::resample_by_arc_length(p.vessel.points, cfg.resample_points);
  p.t = geom::arc_parameters(p.vessel.points);
  const auto curvature = geom::gaussian_smoothed_curvature(p.vessel.points, cfg.curvature_sigma);
  p.segments = geom::compute_segments(curvature, cfg.samples, cfg.sensitivity);
  return p;
}

std::vector<VesselSample> sample_training_points(const PreparedVessel& v, std::optional<std::uint64_t> seed) {
  std::optional<nn::Rng> rng;
  if (seed) rng.emplace(*seed);
  std::vector<VesselSample> out;
  out.reserve(v.segments.size());
  for (const auto& [s, e] : v.segments) {
    const std::size_t k = rng ? s + rng->index(e - s) : s + (e - s - 1) / 2;
    const std::size_t idx = k + 1;  // curvature entry k belongs to point k + 1
    const auto& p = v.vessel.points[idx];
    out.push_back({p[0], p[1], p[2], p[3], v.t[idx]});
  }
  return out;
}

VesselAe::VesselAe(VesselAeConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  input_ = nn::Mlp2("vessel.input", cfg_.input_width(), cfg_.mlp_hidden, cfg_.model_dim);
  encoder_ = nn::TransformerEncoder("vessel.encoder", cfg_.model_dim, cfg_.layers, cfg_.heads);
  output_ = nn::Mlp2("vessel.output", cfg_.model_dim, cfg_.mlp_hidden, kVesselLatentDim);
  decoder_ = nn::Mlp2("vessel.decoder", kVesselLatentDim + cfg_.fourier.width_per_axis(), cfg_.decoder_hidden, 4);
}

template <class T>
void VesselAe::init(nn::ParamStore<T>& ps, nn::Rng& rng) const {
  input_.init(ps, rng);
  encoder_.init(ps, rng);
  output_.init(ps, rng);
  decoder_.init(ps, rng);
}

template <class T>
nn::Var<T> VesselAe::encode(nn::ParamStore<T>& ps, const nn::Tensor<T>& inputs) const {
  if (inputs.rank() != 3 || inputs.dim(2) != cfg_.input_width())
    throw std::invalid_argument("vessel encoder: expected [B, N, " + std::to_string(cfg_.input_width()) + "] input");
  const std::vector<std::uint8_t> all(inputs.dim(0) * inputs.dim(1), 1);
  auto h = input_(ps, nn::constant(inputs));
  h = encoder_(ps, h, all);
  return output_(ps, nn::masked_mean(h, all));
}

template <class T>
nn::Var<T> VesselAe::residual(nn::ParamStore<T>& ps, const nn::Var<T>& z, const nn::Tensor<T>& t_lifted) const {
  return decoder_(ps, nn::concat_broadcast(nn::constant(t_lifted), z, true));
}

template <class T>
nn::Tensor<T> vessel_encoder_inputs(const std::vector<std::vector<VesselSample>>& batch, const VesselAeConfig& cfg) {
  const std::size_t n = batch.empty() ? 0 : batch.front().size();
  const std::size_t w = cfg.input_width();
  const std::size_t f = cfg.fourier.width_per_axis();
  nn::Tensor<T> out({batch.size(), n, w});
  std::vector<double> lifted(4 * f);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b].size() != n) throw std::invalid_argument("vessel encoder inputs: ragged batch");
    for (std::size_t i = 0; i < n; ++i) {
      const VesselSample& s = batch[b][i];
      const double xyzt[4] = {s[0], s[1], s[2], s[4]};
      geom::lift_fourier_into(xyzt, cfg.fourier, lifted);
      T* row = out.data.data() + (b * n + i) * w;
      for (std::size_t q = 0; q < 4 * f; ++q) row[q] = static_cast<T>(lifted[q]);
      row[4 * f] = static_cast<T>(s[3]);
    }
  }
  return out;
}

template <class T>
nn::Tensor<T> lift_t(const std::vector<std::vector<double>>& ts, const geom::FourierConfig& fourier) {
  const std::size_t n = ts.empty() ? 0 : ts.front().size();
  const std::size_t f = fourier.width_per_axis();
  nn::Tensor<T> out({ts.size(), n, f});
  std::vector<double> lifted(f);
  for (std::size_t b = 0; b < ts.size(); ++b) {
    if (ts[b].size() != n) throw std::invalid_argument("lift_t: ragged batch");
    for (std::size_t i = 0; i < n; ++i) {
      geom::lift_fourier_into(std::span<const double>(&ts[b][i], 1), fourier, lifted);
      for (std::size_t q = 0; q < f; ++q) out[(b * n + i) * f + q] = static_cast<T>(lifted[q]);
    }
  }
  return out;
}

std::vector<double> encode_vessel(const VesselAe& model, nn::ParamStore<float>& ps,
                                  const std::vector<VesselSample>& samples) {
  nn::NoGradGuard ng;
  const auto z = model.encode(ps, vessel_encoder_inputs<float>({samples}, model.config()));
  return {z.value().data.begin(), z.value().data.end()};
}

std::vector<geom::Point4> decode_vessel(const VesselAe& model, nn::ParamStore<float>& ps,
                                        const std::vector<double>& z_v, const geom::Point4& a,
                                        const geom::Point4& b, const std::vector<double>& ts,
                                        geom::MaskMode mode) {
  if (z_v.size() != kVesselLatentDim) throw std::invalid_argument("decode_vessel: z_v must have 64 entries");
  for (double t : ts)
    if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("decode_vessel: t outside [0, 1]");
  if (ts.empty()) return {};
  nn::NoGradGuard ng;
  nn::Tensor<float> z({1, kVesselLatentDim});
  for (std::size_t q = 0; q < kVesselLatentDim; ++q) z[q] = static_cast<float>(z_v[q]);
  const auto f = model.residual(ps, nn::constant(z), lift_t<float>({ts}, model.config().fourier));
  std::vector<geom::Point4> out;
  out.reserve(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const geom::Point4 res{f.value()[i * 4], f.value()[i * 4 + 1], f.value()[i * 4 + 2], f.value()[i * 4 + 3]};
    out.push_back(geom::decode_curve_point(a, b, res, ts[i], mode));
  }
  return out;
}

double vessel_weight(double arc_length, double endpoint_distance, double alpha) {
  if (!(endpoint_distance > 0)) throw std::invalid_argument("vessel_weight: endpoint distance must be positive");
  return alpha * arc_length / std::sqrt(endpoint_distance);
}

VesselBatch make_vessel_batch(const std::vector<PreparedVessel>& data, const std::vector<std::size_t>& index,
                              const VesselAeConfig& cfg, std::optional<std::uint64_t> sample_seed) {
  VesselBatch b;
  for (std::size_t k = 0; k < index.size(); ++k) {
    const PreparedVessel& v = data.at(index[k]);
    std::optional<std::uint64_t> s;
    if (sample_seed) s = nn::derive_seed(*sample_seed, k);
    b.samples.push_back(sample_training_points(v, s));
    b.start.push_back(v.vessel.points.front());
    b.end.push_back(v.vessel.points.back());
    b.weights.push_back(vessel_weight(v.arc_length, v.endpoint_distance, cfg.alpha));
  }
  return b;
}

template <class T>
nn::Var<T> vessel_loss(const VesselAe& model, nn::ParamStore<T>& ps, const VesselBatch& batch,
                       const nn::Tensor<T>& noise) {
  const VesselAeConfig& cfg = model.config();
  const std::size_t nb = batch.samples.size();
  if (nb == 0) throw std::invalid_argument("vessel_loss: empty batch");
  const std::size_t n = batch.samples.front().size();
  auto z = model.encode(ps, vessel_encoder_inputs<T>(batch.samples, cfg));
  if (noise.size() != 0) {
    if (noise.shape != z.shape()) throw std::invalid_argument("vessel_loss: noise shape mismatch");
    z = nn::add_const(z, noise);
  }
  std::vector<std::vector<double>> ts(nb, std::vector<double>(n));
  nn::Tensor<T> offset({nb, n, 4}), weight({nb, n, 4});
  for (std::size_t b = 0; b < nb; ++b) {
    const double wv = batch.weights[b] / static_cast<double>(nb * n);
    for (std::size_t i = 0; i < n; ++i) {
      const VesselSample& s = batch.samples[b][i];
      const double t = s[4];
      ts[b][i] = t;
      for (std::size_t c = 0; c < 4; ++c) {
        const double lin = batch.start[b][c] + (batch.end[b][c] - batch.start[b][c]) * t;
        offset[(b * n + i) * 4 + c] = static_cast<T>(lin - s[c]);
        weight[(b * n + i) * 4 + c] = static_cast<T>(wv * (c < 3 ? cfg.position_weight : cfg.radius_weight));
      }
    }
  }
  auto f = model.residual(ps, z, lift_t<T>(ts, cfg.fourier));
  return nn::sum(nn::mul_const(nn::square(nn::add_const(f, offset)), weight));
}

VesselEval evaluate_vessels(const VesselAe& model, nn::ParamStore<float>& ps, const std::vector<PreparedVessel>& data) {
  nn::NoGradGuard ng;
  VesselEval ev;
  std::size_t count = 0;
  const std::size_t chunk = 64;
  for (std::size_t lo = 0; lo < data.size(); lo += chunk) {
    std::vector<std::size_t> idx;
    for (std::size_t k = lo; k < std::min(data.size(), lo + chunk); ++k) idx.push_back(k);
    const VesselBatch batch = make_vessel_batch(data, idx, model.config(), std::nullopt);
    const auto z = model.encode(ps, vessel_encoder_inputs<float>(batch.samples, model.config()));
    const std::size_t n = batch.samples.front().size();
    std::vector<std::vector<double>> ts(idx.size(), std::vector<double>(n));
    for (std::size_t b = 0; b < idx.size(); ++b)
      for (std::size_t i = 0; i < n; ++i) ts[b][i] = batch.samples[b][i][4];
    const auto f = model.residual(ps, z, lift_t<float>(ts, model.config().fourier));
    for (std::size_t b = 0; b < idx.size(); ++b)
      for (std::size_t i = 0; i < n; ++i) {
        const VesselSample& s = batch.samples[b][i];
        const float* r = f.value().data.data() + (b * n + i) * 4;
        const geom::Point4 res{r[0], r[1], r[2], r[3]};
        const auto p = geom::decode_curve_point(batch.start[b], batch.end[b], res, s[4], geom::MaskMode::eval);
        const auto q = geom::decode_curve_point(batch.start[b], batch.end[b], {0, 0, 0, 0}, s[4], geom::MaskMode::eval);
        for (std::size_t c = 0; c < 4; ++c) {
          ev.mse += (p[c] - s[c]) * (p[c] - s[c]);
          ev.baseline_mse += (q[c] - s[c]) * (q[c] - s[c]);
        }
        count += 4;
      }
  }
  if (count) {
    ev.mse /= static_cast<double>(count);
    ev.baseline_mse /= static_cast<double>(count);
  }
  return ev;
}

json to_json(const TrainSchedule& s) {
  return json{{"steps", s.steps},
              {"batch", s.batch},
              {"peak_lr", s.lr.peak_lr},
              {"warmup_steps", s.lr.warmup_steps},
              {"decay_period", s.lr.decay_period},
              {"decay_factor", s.lr.decay_factor},
              {"beta1", s.adamw.beta1},
              {"beta2", s.adamw.beta2},
              {"eps", s.adamw.eps},
              {"weight_decay", s.adamw.weight_decay},
              {"log_interval", s.log_interval},
              {"checkpoint_interval", s.checkpoint_interval},
              {"seed", s.seed},
              {"steps_per_tree", s.steps_per_tree}};
}

TrainSchedule schedule_from_json(const json& j, TrainSchedule s) {
  if (!j.is_object()) throw ConfigError("schedule: expected an object");
  try {
    s.steps = j.value("steps", s.steps);
    s.batch = j.value("batch", s.batch);
    s.lr.peak_lr = j.value("peak_lr", s.lr.peak_lr);
    s.lr.warmup_steps = j.value("warmup_steps", s.lr.warmup_steps);
    s.lr.decay_period = j.value("decay_period", s.lr.decay_period);
    s.lr.decay_factor = j.value("decay_factor", s.lr.decay_factor);
    s.adamw.beta1 = j.value("beta1", s.adamw.beta1);
    s.adamw.beta2 = j.value("beta2", s.adamw.beta2);
    s.adamw.eps = j.value("eps", s.adamw.eps);
    s.adamw.weight_decay = j.value("weight_decay", s.adamw.weight_decay);
    s.log_interval = j.value("log_interval", s.log_interval);
    s.checkpoint_interval = j.value("checkpoint_interval", s.checkpoint_interval);
    s.seed = j.value("seed", s.seed);
    s.steps_per_tree = j.value("steps_per_tree", s.steps_per_tree);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("schedule: ") + e.what());
  }
  if (s.batch == 0) throw ConfigError("schedule: batch must be positive");
  if (s.log_interval == 0) throw ConfigError("schedule: log_interval must be positive");
  if (s.steps_per_tree == 0) throw ConfigError("schedule: steps_per_tree must be positive");
  if (!(s.lr.peak_lr > 0) || !(s.lr.decay_period > 0) || !(s.lr.decay_factor >= 1))
    throw ConfigError("schedule: learning-rate settings out of range");
  if (!(s.adamw.beta1 >= 0 && s.adamw.beta1 < 1) || !(s.adamw.beta2 >= 0 && s.adamw.beta2 < 1) ||
      !(s.adamw.eps > 0) || !(s.adamw.weight_decay >= 0))
    throw ConfigError("schedule: optimizer settings out of range");
  return s;
}

void train_vessel_ae(const VesselAe& model, const std::vector<PreparedVessel>& data, const TrainSchedule& schedule,
                     nn::ParamStore<float>& ps, nn::OptState<float>& opt, const TrainHooks& hooks) {
  if (data.empty()) throw std::invalid_argument("train_vessel_ae: empty dataset");
  if (ps.entries().empty()) {
    nn::Rng rng(nn::derive_seed(schedule.seed, 0x7e55e1));
    model.init(ps, rng);
  }
  opt.schedule = schedule.lr;
  opt.hyper = schedule.adamw;
  const double noise_std = model.config().noise_std;
  for (std::uint64_t step = opt.step; step < schedule.steps; ++step) {
    nn::Rng pick(nn::derive_seed(schedule.seed, step, 1));
    std::vector<std::size_t> idx(schedule.batch);
    for (auto& i : idx) i = pick.index(data.size());
    const VesselBatch batch = make_vessel_batch(data, idx, model.config(), nn::derive_seed(schedule.seed, step, 2));
    nn::Tensor<float> noise({idx.size(), kVesselLatentDim});
    nn::Rng nrng(nn::derive_seed(schedule.seed, step, 3));
    for (auto& v : noise.data) v = static_cast<float>(nrng.normal(0.0, noise_std));
    const double lr = nn::lr_at_step(opt.step, opt.schedule);
    double value = 0;
    try {
      ps.zero_grad();
      const auto loss = vessel_loss(model, ps, batch, noise);
      value = loss.value()[0];
      loss.backward();
      nn::adamw_step(ps, opt, lr);
    } catch (const nn::NumericalError& e) {
      throw TrainingAborted(std::string("vessel training diverged: ") + e.what(), step);
    }
    const std::uint64_t done = step + 1;
    if (hooks.on_log && done % schedule.log_interval == 0) hooks.on_log(LogRow{done, lr, value, {}});
    if (hooks.on_checkpoint &&
        ((schedule.checkpoint_interval && done % schedule.checkpoint_interval == 0) || done == schedule.steps))
      hooks.on_checkpoint(done, ps, opt);
  }
}

template void VesselAe::init(nn::ParamStore<float>&, nn::Rng&) const;
template void VesselAe::init(nn::ParamStore<double>&, nn::Rng&) const;
template nn::Var<float> VesselAe::encode(nn::ParamStore<float>&, const nn::Tensor<float>&) const;
template nn::Var<double> VesselAe::encode(nn::ParamStore<double>&, const nn::Tensor<double>&) const;
template nn::Var<float> VesselAe::residual(nn::ParamStore<float>&, const nn::Var<float>&,
                                           const nn::Tensor<float>&) const;
template nn::Var<double> VesselAe::residual(nn::ParamStore<double>&, const nn::Var<double>&,
                                            const nn::Tensor<double>&) const;
template nn::Tensor<float> vessel_encoder_inputs(const std::vector<std::vector<VesselSample>>&, const VesselAeConfig&);
template nn::Tensor<double> vessel_encoder_inputs(const std::vector<std::vector<VesselSample>>&, const VesselAeConfig&);
template nn::Tensor<float> lift_t(const std::vector<std::vector<double>>&, const geom::FourierConfig&);
template nn::Tensor<double> lift_t(const std::vector<std::vector<double>>&, const geom::FourierConfig&);
template nn::Var<float> vessel_loss(const VesselAe&, nn::ParamStore<float>&, const VesselBatch&,
                                    const nn::Tensor<float>&);
template nn::Var<double> vessel_loss(const VesselAe&, nn::ParamStore<double>&, const VesselBatch&,
                                     const nn::Tensor<double>&);

}  // namespace vetta::model
