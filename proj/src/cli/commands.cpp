#include "vetta/cli/commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "vetta/tree/io.hpp"
#include "vetta/tree/synth.hpp"

namespace vetta::cli {

using nlohmann::json;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const fs::path& p, const std::string& text) {
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + p.string());
  }
  fs::rename(tmp, p);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void prepare_out_dir(const fs::path& out, bool force) {
  if (out.empty()) throw UsageError("--out is required");
  if (fs::exists(out)) {
    if (!fs::is_directory(out)) throw UsageError(out.string() + " exists and is not a directory");
    if (!fs::is_empty(out) && !force)
      throw UsageError(out.string() + " already exists and is not empty (use --force)");
  }
  fs::create_directories(out);
}

std::string ckpt_name(std::uint64_t step) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "ckpt_%08llu.vtac", static_cast<unsigned long long>(step));
  return buf;
}

}  // namespace

// ---- data ----------------------------------------------------------------

void gen_data(const GenDataOptions& o) {
  if (o.count == 0) throw UsageError("gen-data: --count must be positive");
  if (o.dims != 2 && o.dims != 3) throw UsageError("gen-data: --dims must be 2 or 3");
  if (o.depth < 1 || o.depth > 12) throw UsageError("gen-data: --depth must be in [1, 12]");
  prepare_out_dir(o.out, o.force);
  tree::SynthParams p;
  p.dims = o.dims;
  p.depth = o.depth;
  json files = json::array();
  for (std::size_t i = 0; i < o.count; ++i) {
    const std::uint64_t s = nn::derive_seed(o.seed, i);
    tree::VesselTree t = tree::generate_synthetic_tree(s, p);
    if (o.dims == 3) t = tree::mark_skip_vessels(std::move(t));
    char name[64];
    std::snprintf(name, sizeof name, "tree_%05zu.json", i);
    write_text(o.out / name, tree::save_tree_json(t));
    files.push_back({{"file", name}, {"seed", s}, {"nodes", t.nodes.size()}, {"edges", t.edges.size()}});
  }
  const json manifest{{"generator", "vetta gen-data"}, {"count", o.count}, {"dims", o.dims},
                      {"depth", o.depth},              {"seed", o.seed},   {"files", files}};
  write_text(o.out / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<NamedTree> load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw UsageError("dataset directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json" && e.path().filename() != "manifest.json")
      files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw UsageError("dataset is empty: " + dir.string());
  std::vector<NamedTree> out;
  for (const auto& f : files) {
    NamedTree t{f.stem().string(), tree::load_tree(f)};
    tree::validate_tree(t.tree);
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<geom::PolylineVessel> vessels_from_trees(const std::vector<NamedTree>& trees) {
  std::vector<geom::PolylineVessel> out;
  for (const auto& t : trees)
    for (const auto& e : t.tree.edges)
      if (!e.skip && e.polyline && e.polyline->points.size() >= 2 && e.polyline->endpoint_distance() > 0)
        out.push_back(*e.polyline);
  return out;
}

// ---- configuration -------------------------------------------------------

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw UsageError("config: expected a JSON object");
  static const std::set<std::string> known{"mode",  "variant",  "dataset", "dataset_limit", "synthetic_vessels",
                                           "holdout_vessels", "seed", "schedule", "model", "vessel_checkpoint"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw UsageError("config: unknown key '" + k + "'");
  RunConfig c;
  c.raw = j;
  try {
    c.mode = j.value("mode", c.mode);
    c.variant = j.value("variant", c.variant);
    if (j.contains("dataset")) c.dataset = base_dir / j.at("dataset").get<std::string>();
    if (j.contains("dataset_limit")) c.dataset_limit = j.at("dataset_limit").get<std::size_t>();
    c.synthetic_vessels = j.value("synthetic_vessels", c.synthetic_vessels);
    c.holdout_vessels = j.value("holdout_vessels", c.holdout_vessels);
    c.seed = j.value("seed", c.seed);
    if (j.contains("vessel_checkpoint")) c.vessel_checkpoint = base_dir / j.at("vessel_checkpoint").get<std::string>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  if (const char* env = std::getenv("VETTA_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw UsageError("VETTA_SEED must be a non-negative integer");
    c.seed = v;
  }
  if (c.mode != "tree" && c.mode != "vessel") throw UsageError("config: mode must be 'tree' or 'vessel'");
  if (c.variant != "ae" && c.variant != "vae") throw UsageError("config: variant must be 'ae' or 'vae'");
  const json model = j.value("model", json::object());
  const json sched = j.value("schedule", json::object());
  if (c.mode == "vessel") {
    if (c.variant != "ae") throw UsageError("config: the vessel model has no variational variant");
    c.vessel = model::vessel_config_from_json(model);
    model::TrainSchedule d;
    c.schedule = model::schedule_from_json(sched, d);
    if (c.dataset.empty() && c.synthetic_vessels == 0)
      throw UsageError("config: vessel mode needs 'dataset' or 'synthetic_vessels'");
  } else {
    json m = model;
    m["variational"] = c.variant == "vae";
    c.tree = model::tree_config_from_json(m);
    model::TrainSchedule d;
    d.steps = 20000;
    d.batch = 32;
    d.lr = {3e-4, 500, 16000, 10.0};
    d.log_interval = 100;
    d.checkpoint_interval = 5000;
    c.schedule = model::schedule_from_json(sched, d);
    if (c.dataset.empty()) throw UsageError("config: tree mode needs 'dataset'");
    if (c.vessel_checkpoint && c.tree.dims != 3) throw UsageError("config: vessel_checkpoint applies to 3D only");
  }
  if (c.schedule.steps == 0) throw UsageError("config: schedule.steps must be positive");
  c.schedule.seed = c.seed;
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw UsageError("config: " + std::string(e.what()));
  } catch (const std::runtime_error& e) {
    throw UsageError(e.what());
  }
  return parse_run_config(j, path.parent_path());
}

// ---- training ------------------------------------------------------------

namespace {

/// Loss CSV that survives resumption: rows after the resume step are dropped
/// before new rows are appended.
class LossLog {
 public:
  LossLog(fs::path path, std::string header, std::optional<std::uint64_t> resume_step) : path_(std::move(path)) {
    std::string kept = header + "\n";
    if (resume_step && fs::exists(path_)) {
      std::istringstream in(read_text(path_));
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (std::stoull(line.substr(0, line.find(','))) <= *resume_step) kept += line + "\n";
      }
    }
    write_text(path_, kept);
  }
  void append(const model::LogRow& r) {
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    out << r.step << "," << num(r.lr) << "," << num(r.loss);
    for (double e : r.extra) out << "," << num(e);
    out << "\n";
  }

 private:
  fs::path path_;
};

struct TrainState {
  nn::ParamStore<float> ps;
  nn::OptState<float> opt;
  std::optional<std::uint64_t> resume_step;
};

TrainState start_state(const TrainOptions& o, const std::string& kind) {
  TrainState s;
  if (o.resume) {
    auto ck = nn::load_checkpoint<float>(o.resume->string());
    const json cj = json::parse(ck.config_json);
    if (cj.value("kind", "") != kind) throw UsageError("checkpoint is not a " + kind + " checkpoint");
    if (!ck.opt) throw UsageError("checkpoint has no optimizer state to resume from");
    s.ps = std::move(ck.params);
    s.opt = std::move(*ck.opt);
    s.resume_step = ck.step;
  }
  return s;
}

void report(bool quiet, const std::string& what, const model::LogRow& r) {
  if (quiet) return;
  std::cerr << what << " step " << r.step << " lr " << r.lr << " loss " << r.loss << "\n";
}

std::vector<geom::PolylineVessel> synthetic_vessels(std::size_t count, std::uint64_t seed) {
  std::vector<geom::PolylineVessel> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(tree::generate_synthetic_vessel(nn::derive_seed(seed, i)));
  return out;
}

std::vector<model::PreparedVessel> prepare_all(const std::vector<geom::PolylineVessel>& vs,
                                               const model::VesselAeConfig& cfg) {
  std::vector<model::PreparedVessel> out;
  out.reserve(vs.size());
  for (const auto& v : vs) out.push_back(model::prepare_vessel(v, cfg));
  return out;
}

}  // namespace

json train_vessel(const TrainOptions& o) {
  const RunConfig c = load_run_config(o.config);
  if (c.mode != "vessel") throw UsageError("train-vessel needs a config with mode 'vessel'");
  std::vector<geom::PolylineVessel> raw;
  if (!c.dataset.empty()) {
    auto trees = load_dataset(c.dataset);
    if (c.dataset_limit && trees.size() > *c.dataset_limit) trees.resize(*c.dataset_limit);
    raw = vessels_from_trees(trees);
  } else {
    raw = synthetic_vessels(c.synthetic_vessels, nn::derive_seed(c.seed, 0x7e55));
  }
  if (raw.empty()) throw UsageError("no vessels to train on");
  const auto data = prepare_all(raw, c.vessel);
  prepare_out_dir(o.out, o.force || o.resume.has_value());

  const json snapshot{{"kind", "vessel"}, {"model", model::to_json(c.vessel)}, {"schedule", model::to_json(c.schedule)}};
  write_text(o.out / "config.json", snapshot.dump(2) + "\n");
  TrainState st = start_state(o, "vessel");
  LossLog log(o.out / "loss.csv", "step,lr,loss", st.resume_step);
  const std::string cfg_text = snapshot.dump();
  const fs::path final_path = o.out / "final.vtac";

  model::VesselAe net(c.vessel);
  model::TrainHooks hooks;
  hooks.on_log = [&](const model::LogRow& r) {
    log.append(r);
    report(o.quiet, "vessel", r);
  };
  hooks.on_checkpoint = [&](std::uint64_t step, const nn::ParamStore<float>& p, const nn::OptState<float>& opt) {
    nn::save_checkpoint((o.out / ckpt_name(step)).string(), p, &opt, step, cfg_text);
    if (step == c.schedule.steps) nn::save_checkpoint(final_path.string(), p, &opt, step, cfg_text);
  };
  model::train_vessel_ae(net, data, c.schedule, st.ps, st.opt, hooks);

  const auto ev = model::evaluate_vessels(net, st.ps, data);
  json summary{{"kind", "vessel"},
               {"steps", c.schedule.steps},
               {"seed", c.seed},
               {"vessels", data.size()},
               {"train_mse", ev.mse},
               {"train_baseline_mse", ev.baseline_mse}};
  if (c.holdout_vessels > 0) {
    const auto hold = prepare_all(synthetic_vessels(c.holdout_vessels, nn::derive_seed(c.seed, 0x401d)), c.vessel);
    const auto hv = model::evaluate_vessels(net, st.ps, hold);
    summary["holdout_mse"] = hv.mse;
    summary["holdout_baseline_mse"] = hv.baseline_mse;
  }
  write_text(o.out / "summary.json", summary.dump(2) + "\n");
  return summary;
}

json train_tree(const TrainOptions& o) {
  RunConfig c = load_run_config(o.config);
  if (c.mode != "tree") throw UsageError("train-tree needs a config with mode 'tree'");
  auto trees = load_dataset(c.dataset);
  if (c.dataset_limit && trees.size() > *c.dataset_limit) trees.resize(*c.dataset_limit);
  for (const auto& t : trees)
    if (t.tree.dims != c.tree.dims)
      throw UsageError("dataset tree " + t.id + " has dims " + std::to_string(t.tree.dims) + ", config has " +
                       std::to_string(c.tree.dims));
  if (c.tree.dims == 3 && !c.raw.value("model", json::object()).contains("frame")) {
    std::vector<tree::VesselTree> all;
    for (const auto& t : trees) all.push_back(t.tree);
    c.tree.frame = tree::ModelFrame::fit_all(all);
  }
  std::optional<LoadedVessel> vessel;
  std::vector<tree::EmbeddingMap> embeddings;
  if (c.vessel_checkpoint) {
    vessel = load_vessel_model(*c.vessel_checkpoint);
    for (const auto& t : trees) embeddings.push_back(vessel_embeddings(*vessel, t.tree));
  }
  prepare_out_dir(o.out, o.force || o.resume.has_value());

  json snapshot{{"kind", "tree"},
                {"variant", c.variant},
                {"model", model::to_json(c.tree)},
                {"schedule", model::to_json(c.schedule)}};
  snapshot["vessel_checkpoint"] =
      c.vessel_checkpoint ? json(fs::absolute(*c.vessel_checkpoint).lexically_normal().string()) : json(nullptr);
  write_text(o.out / "config.json", snapshot.dump(2) + "\n");
  TrainState st = start_state(o, "tree");
  const std::string header = c.tree.variational ? "step,lr,loss,reconstruction,kl" : "step,lr,loss,reconstruction";
  LossLog log(o.out / "loss.csv", header, st.resume_step);
  const std::string cfg_text = snapshot.dump();
  const fs::path final_path = o.out / "final.vtac";

  model::TreeAe net(c.tree);
  std::vector<tree::VesselTree> data;
  for (const auto& t : trees) data.push_back(t.tree);
  model::TrainHooks hooks;
  hooks.on_log = [&](const model::LogRow& r) {
    log.append(r);
    report(o.quiet, "tree", r);
  };
  hooks.on_checkpoint = [&](std::uint64_t step, const nn::ParamStore<float>& p, const nn::OptState<float>& opt) {
    nn::save_checkpoint((o.out / ckpt_name(step)).string(), p, &opt, step, cfg_text);
    if (step == c.schedule.steps) nn::save_checkpoint(final_path.string(), p, &opt, step, cfg_text);
  };
  model::train_tree_ae(net, data, embeddings.empty() ? nullptr : &embeddings, c.schedule, st.ps, st.opt, hooks);
  const json summary{{"kind", "tree"}, {"variant", c.variant}, {"steps", c.schedule.steps}, {"seed", c.seed},
                     {"trees", data.size()}};
  write_text(o.out / "summary.json", summary.dump(2) + "\n");
  return summary;
}

// ---- inference -----------------------------------------------------------

LoadedVessel load_vessel_model(const fs::path& ckpt) {
  auto ck = nn::load_checkpoint<float>(ckpt.string());
  const json cj = json::parse(ck.config_json);
  if (cj.value("kind", "") != "vessel") throw UsageError(ckpt.string() + " is not a vessel checkpoint");
  LoadedVessel v;
  v.model = std::make_unique<model::VesselAe>(model::vessel_config_from_json(cj.at("model")));
  v.params = std::move(ck.params);
  return v;
}

LoadedTreeModel load_tree_model(const fs::path& ckpt) {
  auto ck = nn::load_checkpoint<float>(ckpt.string());
  const json cj = json::parse(ck.config_json);
  if (cj.value("kind", "") != "tree") throw UsageError(ckpt.string() + " is not a tree checkpoint");
  LoadedTreeModel m;
  m.model = std::make_unique<model::TreeAe>(model::tree_config_from_json(cj.at("model")));
  m.params = std::move(ck.params);
  m.variational = m.model->config().variational;
  if (cj.contains("vessel_checkpoint") && cj["vessel_checkpoint"].is_string())
    m.vessel = load_vessel_model(cj["vessel_checkpoint"].get<std::string>());
  return m;
}

model::VesselDecoder LoadedTreeModel::vessel_decoder() {
  if (!vessel) return {};
  return {vessel->model.get(), &vessel->params};
}

tree::EmbeddingMap vessel_embeddings(LoadedVessel& v, const tree::VesselTree& t) {
  tree::EmbeddingMap out;
  if (t.dims != 3) return out;
  for (const auto& e : t.edges) {
    if (e.skip || !e.polyline || !(e.polyline->endpoint_distance() > 0)) continue;
    const auto p = model::prepare_vessel(*e.polyline, v.model->config());
    out[e.child] = model::encode_vessel(*v.model, v.params, model::sample_training_points(p, std::nullopt));
  }
  return out;
}

tree::EmbeddingMap LoadedTreeModel::embeddings(const tree::VesselTree& t) {
  if (!vessel) return {};
  return vessel_embeddings(*vessel, t);
}

std::vector<double> LoadedTreeModel::encode(const tree::VesselTree& t) {
  if (t.dims != model->config().dims)
    throw UsageError("input tree has dims " + std::to_string(t.dims) + ", model expects " +
                     std::to_string(model->config().dims));
  const auto emb = embeddings(t);
  return model::encode_tree(*model, params, t, emb.empty() ? nullptr : &emb);
}

model::DecodeResult LoadedTreeModel::decode(const std::vector<double>& z) {
  model::DecodeLimits lim;
  lim.max_nodes = model->config().max_nodes;
  const auto vd = vessel_decoder();
  return model::decode_tree(*model, params, z, vessel ? &vd : nullptr, lim);
}

eval::MetricOptions metric_options(int dims) {
  eval::MetricOptions m;
  if (dims == 3) {
    m.spacing = 0.5;
    m.tau = 1.0;
    m.volumetric = true;
  }
  return m;
}

json reconstruct(const fs::path& ckpt, const fs::path& input, const fs::path& out) {
  auto m = load_tree_model(ckpt);
  const auto target = tree::load_tree(input);
  tree::validate_tree(target);
  const auto res = m.decode(m.encode(target));
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_text(out, tree::save_tree_json(res.tree));
  if (res.tree.dims == 2) {
    fs::path svg = out;
    svg.replace_extension(".svg");
    write_text(svg, tree::tree_to_svg(res.tree));
  }
  const auto met = eval::compare_trees(input.stem().string(), res.tree, target, metric_options(target.dims));
  json j{{"input", input.filename().string()},
         {"nodes", res.tree.nodes.size()},
         {"truncated", res.truncated},
         {"chd", met.chd},
         {"acd", met.acd},
         {"cf1", met.cf1}};
  if (met.dice) {
    j["dice"] = *met.dice;
    j["surface_hd"] = *met.surface_hd;
    j["surface_asd"] = *met.surface_asd;
  }
  return j;
}

json interpolate(const fs::path& ckpt, const fs::path& a, const fs::path& b, std::size_t steps, const fs::path& out) {
  if (steps < 2) throw UsageError("interpolate: --steps must be at least 2");
  auto m = load_tree_model(ckpt);
  if (!m.variational) throw UsageError("interpolate needs a variational (vae) checkpoint");
  const auto ta = tree::load_tree(a), tb = tree::load_tree(b);
  const auto za = m.encode(ta), zb = m.encode(tb);
  fs::create_directories(out);
  json items = json::array();
  for (std::size_t i = 0; i < steps; ++i) {
    const double alpha = static_cast<double>(i) / static_cast<double>(steps - 1);
    std::vector<double> z(za.size());
    for (std::size_t q = 0; q < z.size(); ++q) z[q] = (1.0 - alpha) * za[q] + alpha * zb[q];
    const auto res = m.decode(z);
    char name[64];
    std::snprintf(name, sizeof name, "interp_%03zu.json", i);
    write_text(out / name, tree::save_tree_json(res.tree));
    if (res.tree.dims == 2) {
      std::snprintf(name, sizeof name, "interp_%03zu.svg", i);
      write_text(out / name, tree::tree_to_svg(res.tree));
    }
    items.push_back({{"index", i},
                     {"alpha", alpha},
                     {"nodes", res.tree.nodes.size()},
                     {"valid", tree::is_valid_tree(res.tree)},
                     {"truncated", res.truncated}});
  }
  const json summary{{"a", a.filename().string()}, {"b", b.filename().string()}, {"steps", steps}, {"trees", items}};
  write_text(out / "interpolation.json", summary.dump(2) + "\n");
  return summary;
}

std::vector<double> mean_latent(LoadedTreeModel& m, const std::vector<NamedTree>& trees) {
  if (trees.empty()) throw UsageError("mean latent over an empty dataset");
  std::vector<double> mean;
  for (const auto& t : trees) {
    const auto z = m.encode(t.tree);
    if (mean.empty()) mean.assign(z.size(), 0.0);
    for (std::size_t q = 0; q < z.size(); ++q) mean[q] += z[q];
  }
  for (double& v : mean) v /= static_cast<double>(trees.size());
  return mean;
}

json evaluate(const EvalOptions& o) {
  const auto data = load_dataset(o.dataset);
  std::vector<eval::SampleMetrics> rows;
  json seeds = json::object();
  if (o.identity) {
    for (const auto& t : data) rows.push_back(eval::compare_trees(t.id, t.tree, t.tree, metric_options(t.tree.dims)));
  } else {
    auto m = load_tree_model(o.ckpt);
    const auto header = nn::read_checkpoint_header(o.ckpt.string());
    seeds["schedule_seed"] = json::parse(header.config_json).at("schedule").value("seed", 0);
    seeds["checkpoint_step"] = header.step;
    std::optional<tree::VesselTree> shared;
    if (o.mean_latent_from) shared = m.decode(mean_latent(m, load_dataset(*o.mean_latent_from))).tree;
    for (const auto& t : data) {
      const tree::VesselTree pred = shared ? *shared : m.decode(m.encode(t.tree)).tree;
      rows.push_back(eval::compare_trees(t.id, pred, t.tree, metric_options(t.tree.dims)));
    }
  }
  fs::create_directories(o.out);
  write_text(o.out / "metrics.csv", eval::metrics_csv(rows));
  json summary = eval::metrics_summary(rows);
  const fs::path ds = o.dataset.filename().empty() ? o.dataset.parent_path() : o.dataset;
  summary["dataset"] = ds.filename().string();
  summary["mode"] = o.identity ? "identity" : (o.mean_latent_from ? "mean_latent" : "reconstruction");
  summary["seeds"] = seeds;
  write_text(o.out / "summary.json", summary.dump(2) + "\n");
  return summary;
}

}  // namespace vetta::cli
