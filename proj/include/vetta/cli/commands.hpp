#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vetta/eval/metrics.hpp"
#include "vetta/model/recursive.hpp"
#include "vetta/model/tree_ae.hpp"
#include "vetta/model/vessel_ae.hpp"

namespace vetta::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitNumerical = 3 };

/// Bad flags, bad config values, path collisions, dimension mismatches.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- data ----------------------------------------------------------------

struct GenDataOptions {
  fs::path out;
  std::size_t count = 100;
  int dims = 2;
  int depth = 4;
  std::uint64_t seed = 0;
  bool force = false;
};

/// Writes tree_XXXXX.json files plus manifest.json (per-file seeds).
void gen_data(const GenDataOptions& o);

struct NamedTree {
  std::string id;
  tree::VesselTree tree;
};

/// Every *.json file except manifest.json, in file-name order.
std::vector<NamedTree> load_dataset(const fs::path& dir);

/// Polylines of all non-skip edges, usable as vessel training data.
std::vector<geom::PolylineVessel> vessels_from_trees(const std::vector<NamedTree>& trees);

// ---- configuration -------------------------------------------------------

struct RunConfig {
  std::string mode = "tree";  // tree | vessel
  std::string variant = "ae";  // ae | vae
  fs::path dataset;
  std::optional<std::size_t> dataset_limit;
  std::size_t synthetic_vessels = 0;  // vessel mode without a dataset
  std::size_t holdout_vessels = 0;
  std::uint64_t seed = 0;
  model::TrainSchedule schedule;
  model::VesselAeConfig vessel;
  model::TreeAeConfig tree;
  std::optional<fs::path> vessel_checkpoint;  // 3D tree mode: z_v targets and edge geometry
  nlohmann::json raw;
};

/// Parses and validates a JSON run config. Relative paths resolve against the
/// config file's directory. VETTA_SEED, when set, replaces the seed.
RunConfig load_run_config(const fs::path& path);
RunConfig parse_run_config(const nlohmann::json& j, const fs::path& base_dir);

// ---- training ------------------------------------------------------------

struct TrainOptions {
  fs::path config;
  fs::path out;
  std::optional<fs::path> resume;
  bool force = false;
  bool quiet = false;
};

/// Output directory: config.json, loss.csv, ckpt_XXXXXXXX.vtac at every
/// checkpoint interval, final.vtac and summary.json.
nlohmann::json train_vessel(const TrainOptions& o);
nlohmann::json train_tree(const TrainOptions& o);

// ---- inference -----------------------------------------------------------

struct LoadedVessel {
  std::unique_ptr<model::VesselAe> model;
  nn::ParamStore<float> params;
};

struct LoadedTreeModel {
  std::unique_ptr<model::TreeAe> model;
  nn::ParamStore<float> params;
  bool variational = false;
  std::optional<LoadedVessel> vessel;

  model::VesselDecoder vessel_decoder();
  /// z_v per edge from the vessel model (3D with a vessel checkpoint), else empty.
  tree::EmbeddingMap embeddings(const tree::VesselTree& t);
  std::vector<double> encode(const tree::VesselTree& t);
  model::DecodeResult decode(const std::vector<double>& z);
};

LoadedVessel load_vessel_model(const fs::path& ckpt);
/// z_v for every non-skip edge with a polyline (3D trees).
tree::EmbeddingMap vessel_embeddings(LoadedVessel& v, const tree::VesselTree& t);
LoadedTreeModel load_tree_model(const fs::path& ckpt);

eval::MetricOptions metric_options(int dims);

/// Writes the reconstruction (JSON, plus SVG in 2D) and returns its metrics.
nlohmann::json reconstruct(const fs::path& ckpt, const fs::path& input, const fs::path& out);

/// Decodes (1 - a) z_a + a z_b for `steps` uniform a in [0, 1].
nlohmann::json interpolate(const fs::path& ckpt, const fs::path& a, const fs::path& b, std::size_t steps,
                           const fs::path& out);

struct EvalOptions {
  fs::path ckpt;
  fs::path dataset;
  fs::path out;
  bool identity = false;  // compare every target with itself
  std::optional<fs::path> mean_latent_from;  // decode the mean training latent for every sample
};

/// metrics.csv and summary.json in `out`; returns the summary.
nlohmann::json evaluate(const EvalOptions& o);

/// Mean of z_t (z_mu) over a set of trees.
std::vector<double> mean_latent(LoadedTreeModel& m, const std::vector<NamedTree>& trees);

/// Parses argv and dispatches; exceptions become exit codes.
int run_cli(int argc, char** argv);

}  // namespace vetta::cli
