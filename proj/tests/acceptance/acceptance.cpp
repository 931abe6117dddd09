// Acceptance runner: prints one "criterion N: PASS|FAIL ..." line per criterion.
//
//   vetta_acceptance [--work DIR] [--only 1,2,5] [--reuse]
//
// --reuse keeps trained checkpoints found in the work directory instead of
// retraining (criteria 7 to 9); useful when iterating on evaluation only.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vetta/cli/commands.hpp"
#include "vetta/geom/fourier.hpp"
#include "vetta/match/matching.hpp"
#include "vetta/model/recursive.hpp"
#include "vetta/model/tree_ae.hpp"
#include "vetta/model/vessel_ae.hpp"
#include "vetta/nn/grad_check.hpp"
#include "vetta/nn/ops.hpp"
#include "vetta/tree/io.hpp"
#include "vetta/tree/synth.hpp"

using namespace vetta;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

template <class... A>
std::string fmt(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

struct Context {
  fs::path work;
  bool reuse = false;
  std::set<std::string> done;  // desk data and models produced by this process
};

// ---- shared configurations ------------------------------------------------

model::TreeAeConfig tiny_tree(int dims) {
  model::TreeAeConfig c;
  c.dims = dims;
  c.heads = 2;
  c.head_dim = 8;
  c.encoder_layers = 1;
  c.partial_layers = 1;
  c.decoder_layers = 1;
  c.edge_hidden = 16;
  c.pool_hidden = 16;
  c.predictor_hidden = 16;
  c.z_dim = 8;
  c.jitter = 0.0;
  if (dims == 3) {
    c.frame.dims = 3;
    c.frame.center = {0, 0, 0};
    c.frame.scale = 0.005;
  }
  return c;
}

model::VesselAeConfig tiny_vessel() {
  model::VesselAeConfig c;
  c.model_dim = 32;
  c.layers = 1;
  c.heads = 2;
  c.mlp_hidden = 48;
  c.decoder_hidden = 48;
  return c;
}

// The desk-scale tree model used for training trends and decoding checks.
json desk_tree_model() {
  return json{{"dims", 2},       {"heads", 1},          {"head_dim", 64},         {"z_dim", 64},
              {"edge_hidden", 128}, {"pool_hidden", 128}, {"predictor_hidden", 128}};
}

tree::VesselTree synth_tree(std::uint64_t seed, int dims) {
  tree::SynthParams p;
  p.dims = dims;
  p.depth = 4;
  auto t = tree::generate_synthetic_tree(seed, p);
  return dims == 3 ? tree::mark_skip_vessels(t) : t;
}

void write_json(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2) << "\n"; }

json read_json(const fs::path& p) { return json::parse(std::ifstream(p)); }

// ---- 1: right-hand matching vs enumeration ---------------------------------

/// Exhaustive minimum over injective maps from active targets to slots; each
/// candidate total is summed over active columns in ascending order.
double enumerate_best(const std::vector<double>& c, std::size_t s, std::size_t t,
                      const std::vector<std::uint8_t>& mask) {
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < t; ++j)
    if (mask[j]) cols.push_back(j);
  std::vector<std::size_t> pick(cols.size());
  std::vector<char> used(s, 0);
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t)> rec = [&](std::size_t d) {
    if (d == cols.size()) {
      double sum = 0;
      for (std::size_t q = 0; q < cols.size(); ++q) sum += c[pick[q] * t + cols[q]];
      best = std::min(best, sum);
      return;
    }
    for (std::size_t i = 0; i < s; ++i) {
      if (used[i]) continue;
      used[i] = 1;
      pick[d] = i;
      rec(d + 1);
      used[i] = 0;
    }
  };
  rec(0);
  return best;
}

Outcome criterion_1(Context&) {
  nn::Rng rng(0xc1);
  std::size_t mismatches = 0, cases = 0, max_active = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t t = 1 + rng.index(9);
    std::vector<std::uint8_t> mask(t, 0);
    std::size_t active = 0;
    for (std::size_t j = 0; j < t; ++j)
      if (active < 7 && rng.uniform() < 0.7) mask[j] = 1, ++active;
    if (active == 0) mask[rng.index(t)] = 1, active = 1;
    const std::size_t s = active + rng.index(11 - active);
    std::vector<double> c(s * t);
    const bool integer = trial % 4 == 0;  // many exact ties
    for (auto& v : c) v = integer ? static_cast<double>(rng.index(4)) : rng.uniform(0, 10);
    const auto r = match::right_hand_matching(c, s, t, mask);
    double got = 0;
    for (std::size_t j = 0; j < t; ++j)
      for (std::size_t i = 0; i < s; ++i)
        if (r[i * t + j] != 0.0) got += c[i * t + j];
    if (got != enumerate_best(c, s, t, mask)) ++mismatches;
    ++cases;
    max_active = std::max(max_active, active);
  }
  return {mismatches == 0, fmt("%zu matrices (up to %zu active targets), %zu cost mismatches", cases, max_active,
                               mismatches)};
}

// ---- 2: top-k invariants ----------------------------------------------------

Outcome criterion_2(Context&) {
  nn::Rng rng(0xc2);
  std::size_t violations = 0;
  std::string first;
  auto violate = [&](int trial, const std::string& what) {
    if (violations++ == 0) first = fmt(" (first: instance %d, %s)", trial, what.c_str());
  };
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t k = 1 + rng.index(3);
    const std::size_t t = 1 + rng.index(6);
    match::CostMatrix c;
    c.t = t;
    c.mask.assign(t, 0);
    std::size_t active = 0;
    for (std::size_t j = 0; j < t; ++j)
      if (rng.uniform() < 0.6) c.mask[j] = 1, ++active;
    if (active == 0) c.mask[rng.index(t)] = 1, active = 1;
    c.s = k * active + rng.index(33 - std::min<std::size_t>(32, k * active));
    c.data.resize(c.s * t);
    const bool integer = trial % 3 == 0;
    for (auto& v : c.data) v = integer ? static_cast<double>(rng.index(3)) : rng.uniform(0, 5);
    const auto m = match::top_k_matching(c, k);
    std::size_t r_ones = 0;
    for (std::size_t i = 0; i < c.s; ++i) {
      double row = 0;
      for (std::size_t j = 0; j < t; ++j) {
        const double l = m.L[i * t + j], r = m.R[i * t + j];
        row += l;
        if (l != 0.0 && l != 1.0) violate(trial, "L not binary");
        if (r != 0.0 && r != 1.0) violate(trial, "R not binary");
        if (r == 1.0) ++r_ones;
      }
      if (row != 1.0) violate(trial, "L row sum != 1");
    }
    for (std::size_t j = 0; j < t; ++j) {
      std::size_t lc = 0, rc = 0;
      for (std::size_t i = 0; i < c.s; ++i) {
        lc += m.L[i * t + j] == 1.0;
        rc += m.R[i * t + j] == 1.0;
      }
      if (c.mask[j] && lc < k) violate(trial, "active target with fewer than k slots in L");
      if (!c.mask[j] && (lc || rc)) violate(trial, "inactive column not empty");
    }
    if (r_ones != k * active) violate(trial, "R ones != k * active");
  }
  return {violations == 0, fmt("10000 instances, %zu violations%s", violations, first.c_str())};
}

// ---- 3: gradient checks -----------------------------------------------------

tree::EmbeddingMap random_embeddings(const tree::VesselTree& t, std::uint64_t seed) {
  nn::Rng rng(seed);
  tree::EmbeddingMap m;
  for (const auto& e : t.edges) {
    std::vector<double> z(tree::kVesselEmbeddingDim);
    for (auto& v : z) v = rng.normal(0, 0.5);
    m[e.child] = z;
  }
  return m;
}

Outcome criterion_3(Context&) {
  std::vector<std::string> parts;
  bool ok = true;
  auto record = [&](const char* name, const nn::GradCheckReport& r, std::size_t min_probes) {
    const bool pass = r.probes >= min_probes && r.max_rel_error < 1e-3;
    ok = ok && pass;
    parts.push_back(fmt("%s %zu probes max rel %.2e", name, r.probes, r.max_rel_error));
  };

  {
    const auto cfg = tiny_vessel();
    model::VesselAe net(cfg);
    nn::ParamStore<double> ps;
    nn::Rng rng(31);
    net.init(ps, rng);
    std::vector<model::PreparedVessel> data;
    for (std::uint64_t s = 0; s < 3; ++s) data.push_back(model::prepare_vessel(tree::generate_synthetic_vessel(s + 40), cfg));
    const auto batch = model::make_vessel_batch(data, {0, 1, 2}, cfg, 5);
    nn::Tensor<double> noise({3, model::kVesselLatentDim});
    for (auto& v : noise.data) v = rng.normal(0, cfg.noise_std);
    record("vessel loss", nn::grad_check([&] { return model::vessel_loss(net, ps, batch, noise); }, ps, 150, 32), 100);
  }
  {
    const auto cfg = tiny_tree(2);
    const auto layout = cfg.slot_layout();
    nn::ParamStore<double> ps;
    nn::Rng rng(33);
    ps.add_uniform("slots", {3, 16, layout.width()}, -1, 1, rng);
    std::vector<match::LiftedTargets> targets;
    for (int b = 0; b < 3; ++b) {
      std::vector<match::TargetNode> g;
      for (int q = 0; q <= b % 2; ++q) {
        match::TargetNode n;
        n.pos = {rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), 0};
        n.n_children = static_cast<int>(rng.index(3));
        g.push_back(n);
      }
      targets.push_back(match::lift_targets(g, layout));
    }
    record("tree loss", nn::grad_check([&] { return match::tree_loss(ps.var("slots"), targets, 3); }, ps, 150, 34),
           100);
  }
  for (int dims : {2, 3}) {
    auto cfg = tiny_tree(dims);
    cfg.variational = true;
    cfg.kl_weight = 0.1;
    model::TreeAe net(cfg);
    nn::ParamStore<double> ps;
    nn::Rng rng(35 + dims);
    net.init(ps, rng);
    std::vector<model::TrainingExample> batch;
    std::vector<tree::EmbeddingMap> embs;
    embs.reserve(3);
    for (std::uint64_t s = 0; s < 3; ++s) {
      const auto t = synth_tree(60 + s, dims);
      embs.push_back(random_embeddings(t, s));
      batch.push_back(model::make_training_example(t, dims == 3 ? &embs.back() : nullptr, cfg, s + 9));
    }
    nn::Tensor<double> eps({batch.size(), cfg.z_dim});
    for (auto& v : eps.data) v = rng.normal(0, 1);
    record(dims == 2 ? "tree-AE 2D" : "tree-AE 3D",
           nn::grad_check([&] { return model::tree_ae_loss(net, ps, batch, eps).total; }, ps, 150, 36), 100);
  }
  std::string detail;
  for (const auto& p : parts) detail += (detail.empty() ? "" : "; ") + p;
  return {ok, detail};
}

// ---- 4: endpoint exactness --------------------------------------------------

Outcome criterion_4(Context&) {
  const auto cfg = tiny_vessel();
  model::VesselAe net(cfg);
  double worst = 0;
  std::size_t n = 0;
  for (std::uint64_t w = 0; w < 5; ++w) {
    nn::ParamStore<float> ps;
    nn::Rng init(nn::derive_seed(0xc4, w));
    net.init(ps, init);
    nn::Rng rng(nn::derive_seed(0xc4, w, 1));
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> zv(model::kVesselLatentDim);
      for (auto& v : zv) v = rng.normal(0, 2);
      const geom::Point4 a{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.2, 3)};
      const geom::Point4 b{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.2, 3)};
      const auto g = model::decode_vessel(net, ps, zv, a, b, {0.0, 0.37, 1.0}, geom::MaskMode::eval);
      for (std::size_t c = 0; c < 4; ++c) {
        worst = std::max(worst, std::abs(g.front()[c] - a[c]));
        worst = std::max(worst, std::abs(g.back()[c] - b[c]));
      }
      ++n;
    }
  }
  return {worst <= 1e-6, fmt("%zu decodes over 5 weight seeds, max endpoint error %.3g", n, worst)};
}

// ---- 5: Fourier inversion ---------------------------------------------------

Outcome criterion_5(Context&) {
  const geom::FourierConfig fc;
  std::size_t violations = 0, n = 0;
  std::string detail;
  for (const geom::Interval dom : {geom::Interval{-0.5, 0.5}, geom::Interval{-0.5, 1.5}}) {
    const geom::FourierInverter inv(fc, dom, 1000);
    const double h = inv.spacing();
    // Features have period 1, so only one period of a wider domain is identifiable.
    const double hi = std::min(dom.hi, dom.lo + 1.0);
    nn::Rng rng(0xc5);
    double worst = 0;
    for (int i = 0; i < 10000; ++i) {
      const double x = rng.uniform(dom.lo + h, hi - h);
      const double xs[1] = {x};
      const double err = std::abs(inv.invert_axis(geom::lift_fourier(xs, fc)) - x);
      worst = std::max(worst, err);
      if (err > 0.5 * h) ++violations;
      ++n;
    }
    detail += fmt("%s[%g,%g) max err %.3g (half spacing %.3g)", detail.empty() ? "" : "; ", dom.lo, dom.hi, worst,
                  0.5 * h);
  }
  return {violations == 0, fmt("%zu samples, %zu violations; ", n, violations) + detail};
}

// ---- 6: topology guarantee --------------------------------------------------

Outcome criterion_6(Context&) {
  std::size_t total = 0, invalid = 0, truncated = 0;
  std::string first;
  auto check = [&](const model::TreeAeConfig& cfg, std::size_t latents, const model::VesselDecoder* vd,
                   std::uint64_t tag) {
    model::TreeAe net(cfg);
    for (std::uint64_t w = 0; w < 5; ++w) {
      nn::ParamStore<float> ps;
      nn::Rng init(nn::derive_seed(tag, w));
      net.init(ps, init);
      nn::Rng zr(nn::derive_seed(tag, w, 1));
      for (std::size_t i = 0; i < latents; ++i) {
        std::vector<double> z(cfg.z_dim);
        for (auto& v : z) v = zr.normal(0, 1);
        std::string reason;
        try {
          const auto r = model::decode_tree(net, ps, z, vd);
          truncated += r.truncated;
          if (!tree::is_valid_tree(r.tree, &reason)) {
            ++invalid;
            if (first.empty()) first = reason;
          }
        } catch (const std::exception& e) {
          ++invalid;
          if (first.empty()) first = e.what();
        }
        ++total;
      }
    }
  };
  check(model::tree_config_from_json(desk_tree_model()), 200, nullptr, 0xc6);
  auto cfg3 = tiny_tree(3);
  cfg3.z_dim = 32;
  const auto vcfg = tiny_vessel();
  model::VesselAe vnet(vcfg);
  nn::ParamStore<float> vps;
  nn::Rng vr(0xc61);
  vnet.init(vps, vr);
  const model::VesselDecoder vd{&vnet, &vps};
  check(cfg3, 40, &vd, 0xc63);
  return {invalid == 0, fmt("%zu decoded trees (2D 200x5, 3D 40x5), %zu invalid, %zu hit max_nodes%s%s", total,
                            invalid, truncated, first.empty() ? "" : ", first: ", first.c_str())};
}

// ---- 7 and 8: desk-scale tree training --------------------------------------

struct Desk {
  fs::path root, train, held;
};

Desk desk_data(Context& ctx) {
  Desk d{ctx.work / "desk", ctx.work / "desk" / "train", ctx.work / "desk" / "held"};
  fs::create_directories(d.root);
  const bool have = ctx.done.count("data") || (ctx.reuse && fs::exists(d.train / "manifest.json"));
  if (!have) {
    cli::gen_data({d.train, 2000, 2, 4, 101, true});
    cli::gen_data({d.held, 200, 2, 4, 202, true});
  }
  ctx.done.insert("data");
  return d;
}

fs::path train_desk(Context& ctx, const Desk& d, const std::string& variant) {
  const fs::path out = d.root / variant;
  const fs::path cfg = d.root / (variant + ".json");
  json model = desk_tree_model();
  if (variant == "vae") model["kl_weight"] = 1e-6;
  write_json(cfg, {{"mode", "tree"},
                   {"variant", variant},
                   {"dataset", "train"},
                   {"seed", 7},
                   {"model", model},
                   {"schedule", {{"steps", 20000}, {"batch", 32}, {"log_interval", 500}, {"checkpoint_interval", 5000}}}});
  const bool have = ctx.done.count(variant) || (ctx.reuse && fs::exists(out / "final.vtac"));
  if (!have) cli::train_tree({cfg, out, std::nullopt, true, true});
  ctx.done.insert(variant);
  return out / "final.vtac";
}

double eval_acd(const fs::path& ckpt, const Desk& d, const fs::path& out, double* cf1,
                std::optional<fs::path> mean_from = std::nullopt) {
  cli::EvalOptions o;
  o.ckpt = ckpt;
  o.dataset = d.held;
  o.out = out;
  o.mean_latent_from = mean_from;
  const auto s = cli::evaluate(o);
  if (cf1) *cf1 = s["cf1"].get<double>();
  return s["acd"].get<double>();
}

/// Canonical string of the unordered branching pattern.
std::string shape_code(const tree::VesselTree& t, tree::NodeId n) {
  std::vector<std::string> kids;
  for (const auto c : t.children(n)) kids.push_back(shape_code(t, c));
  std::sort(kids.begin(), kids.end());
  std::string s = "(";
  for (const auto& k : kids) s += k;
  return s + ")";
}

Outcome criterion_7(Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const Desk d = desk_data(ctx);
  const fs::path ckpt = train_desk(ctx, d, "ae");
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  double cf1 = 0, base_cf1 = 0;
  const double acd = eval_acd(ckpt, d, d.root / "eval_ae", &cf1);
  const double base = eval_acd(ckpt, d, d.root / "eval_mean", &base_cf1, d.train);

  // Expansion order should not change the decoded branching pattern.
  auto m = cli::load_tree_model(ckpt);
  const auto trees = cli::load_dataset(d.train);
  std::size_t same = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    const auto z = m.encode(trees[i].tree);
    model::DecodeLimits fifo, lifo;
    lifo.order = model::ExpansionOrder::lifo;
    const auto a = model::decode_tree(*m.model, m.params, z, nullptr, fifo).tree;
    const auto b = model::decode_tree(*m.model, m.params, z, nullptr, lifo).tree;
    same += shape_code(a, a.root) == shape_code(b, b.root);
  }
  const bool pass = acd <= base / 3.0 && cf1 >= 0.6;
  return {pass, fmt("held-out ACD %.4f vs mean-latent baseline %.4f (ratio %.3f, need <= 1/3), CF1 %.3f (need >= "
                    "0.6; baseline %.3f); FIFO/LIFO same shape %zu/20; %.1f min",
                    acd, base, acd / base, cf1, base_cf1, same, minutes)};
}

Outcome criterion_8(Context& ctx) {
  const Desk d = desk_data(ctx);
  const fs::path ae = train_desk(ctx, d, "ae");
  const fs::path vae = train_desk(ctx, d, "vae");
  const double acd_ae = eval_acd(ae, d, d.root / "eval_ae", nullptr);
  double cf1 = 0;
  const double acd_vae = eval_acd(vae, d, d.root / "eval_vae", &cf1);

  const auto held = cli::load_dataset(d.held);
  std::size_t decoded = 0, valid = 0;
  for (std::size_t p = 0; p < 20; ++p) {
    const fs::path out = d.root / "interp" / fmt("pair_%02zu", p);
    fs::remove_all(out);
    cli::interpolate(vae, d.held / (held[2 * p].id + ".json"), d.held / (held[2 * p + 1].id + ".json"), 10, out);
    for (std::size_t s = 0; s < 10; ++s) {
      const fs::path f = out / fmt("interp_%03zu.json", s);
      ++decoded;
      try {
        valid += tree::is_valid_tree(tree::load_tree(f));
      } catch (const std::exception&) {
      }
    }
  }
  const bool pass = acd_vae <= 1.5 * acd_ae && valid == decoded && decoded == 200;
  return {pass, fmt("VAE held-out ACD %.4f vs AE %.4f (ratio %.3f, need <= 1.5), VAE CF1 %.3f; interpolations "
                    "valid %zu/%zu",
                    acd_vae, acd_ae, acd_vae / acd_ae, cf1, valid, decoded)};
}

// ---- 9: vessel autoencoder --------------------------------------------------

Outcome criterion_9(Context& ctx) {
  const fs::path root = ctx.work / "vessel";
  fs::create_directories(root);
  const json model{{"model_dim", 64}, {"layers", 2}, {"heads", 4}, {"mlp_hidden", 128}, {"decoder_hidden", 128}};
  write_json(root / "vessel.json",
             {{"mode", "vessel"},
              {"synthetic_vessels", 500},
              {"holdout_vessels", 100},
              {"seed", 11},
              {"model", model},
              {"schedule", {{"steps", 5000}, {"batch", 64}, {"log_interval", 250}, {"checkpoint_interval", 1000}}}});
  const fs::path out = root / "run";
  json s;
  if (ctx.reuse && fs::exists(out / "summary.json"))
    s = read_json(out / "summary.json");
  else
    s = cli::train_vessel({root / "vessel.json", out, std::nullopt, true, true});
  const double mse = s["train_mse"].get<double>(), base = s["train_baseline_mse"].get<double>();
  const double hmse = s["holdout_mse"].get<double>(), hbase = s["holdout_baseline_mse"].get<double>();
  return {mse <= 0.25 * base, fmt("500 vessels: eval MSE %.4g vs straight baseline %.4g (ratio %.3f, need <= 0.25); "
                                  "100 held-out: %.4g vs %.4g (ratio %.3f)",
                                  mse, base, mse / base, hmse, hbase, hmse / hbase)};
}

// ---- 10: CLI determinism ----------------------------------------------------

using Snapshot = std::map<std::string, std::string>;

void snapshot_dir(const fs::path& dir, Snapshot& snap) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    snap["file " + fs::relative(f, dir).string()] = ss.str();
  }
}

struct CliRun {
  std::string name;
  std::vector<std::string> args;
  int expect = cli::kExitOk;
};

int invoke(const std::vector<std::string>& args, std::string& out) {
  std::vector<std::string> argv_s{"vetta"};
  argv_s.insert(argv_s.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_s) argv.push_back(a.data());
  std::ostringstream capture;
  auto* old = std::cout.rdbuf(capture.rdbuf());
  auto* old_err = std::cerr.rdbuf(nullptr);
  int code;
  try {
    code = cli::run_cli(static_cast<int>(argv.size()), argv.data());
  } catch (...) {
    std::cout.rdbuf(old);
    std::cerr.rdbuf(old_err);
    throw;
  }
  std::cout.rdbuf(old);
  std::cerr.rdbuf(old_err);
  out = capture.str();
  return code;
}

Snapshot run_pipeline(const fs::path& dir, const std::vector<CliRun>& runs, std::vector<std::string>& problems) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_json(dir / "vessel.json", {{"mode", "vessel"},
                                   {"synthetic_vessels", 24},
                                   {"holdout_vessels", 6},
                                   {"seed", 5},
                                   {"model", {{"model_dim", 32}, {"layers", 1}, {"heads", 2}, {"mlp_hidden", 48}, {"decoder_hidden", 48}}},
                                   {"schedule", {{"steps", 30}, {"batch", 8}, {"log_interval", 5}, {"checkpoint_interval", 10}}}});
  const json small{{"heads", 2},       {"head_dim", 8},         {"encoder_layers", 1}, {"partial_layers", 1},
                   {"decoder_layers", 1}, {"edge_hidden", 16},  {"pool_hidden", 16},   {"predictor_hidden", 16},
                   {"z_dim", 8}};
  const json sched{{"steps", 30}, {"batch", 4}, {"log_interval", 5}, {"checkpoint_interval", 10}};
  auto tree_cfg = [&](const std::string& variant, const std::string& data, int dims) {
    json m = small;
    m["dims"] = dims;
    json j{{"mode", "tree"}, {"variant", variant}, {"dataset", data}, {"seed", 3}, {"model", m}, {"schedule", sched}};
    if (dims == 3) j["vessel_checkpoint"] = "vessel_run/final.vtac";
    return j;
  };
  write_json(dir / "ae.json", tree_cfg("ae", "d2", 2));
  write_json(dir / "vae.json", tree_cfg("vae", "d2", 2));
  write_json(dir / "ae3.json", tree_cfg("ae", "d3", 3));
  write_json(dir / "bad.json", json{{"mode", "tree"}, {"dataset", "d2"}, {"colour", "red"}});

  Snapshot snap;
  for (const auto& r : runs) {
    std::vector<std::string> args;
    for (const auto& a : r.args) args.push_back(a.rfind("@", 0) == 0 ? (dir / a.substr(1)).string() : a);
    std::string out;
    const int code = invoke(args, out);
    if (code != r.expect) problems.push_back(fmt("%s exited %d (expected %d)", r.name.c_str(), code, r.expect));
    snap["stdout " + r.name] = out;
    snap["exit " + r.name] = std::to_string(code);
  }
  snapshot_dir(dir, snap);
  return snap;
}

Outcome criterion_10(Context& ctx) {
  const std::vector<CliRun> runs{
      {"gen-data 2D", {"gen-data", "--out", "@d2", "--count", "8", "--dims", "2", "--seed", "4"}},
      {"gen-data 3D", {"gen-data", "--out", "@d3", "--count", "4", "--dims", "3", "--depth", "3", "--seed", "4"}},
      {"train-vessel", {"train-vessel", "--config", "@vessel.json", "--out", "@vessel_run", "--quiet"}},
      {"train-vessel resume", {"train-vessel", "--config", "@vessel.json", "--out", "@vessel_resumed", "--quiet",
                               "--resume", "@vessel_run/ckpt_00000010.vtac"}},
      {"train-tree ae", {"train-tree", "--config", "@ae.json", "--out", "@ae_run", "--quiet"}},
      {"train-tree ae resume", {"train-tree", "--config", "@ae.json", "--out", "@ae_resumed", "--quiet", "--resume",
                                "@ae_run/ckpt_00000020.vtac"}},
      {"train-tree vae", {"train-tree", "--config", "@vae.json", "--out", "@vae_run", "--quiet"}},
      {"train-tree 3D", {"train-tree", "--config", "@ae3.json", "--out", "@ae3_run", "--quiet", "--steps-per-tree", "2"}},
      {"reconstruct 2D", {"reconstruct", "--ckpt", "@ae_run/final.vtac", "--input", "@d2/tree_00001.json", "--out",
                          "@rec/two.json"}},
      {"reconstruct 3D", {"reconstruct", "--ckpt", "@ae3_run/final.vtac", "--input", "@d3/tree_00002.json", "--out",
                          "@rec/three.json"}},
      {"interpolate", {"interpolate", "--ckpt", "@vae_run/final.vtac", "--a", "@d2/tree_00000.json", "--b",
                       "@d2/tree_00003.json", "--steps", "4", "--out", "@interp"}},
      {"eval", {"eval", "--ckpt", "@ae_run/final.vtac", "--dataset", "@d2", "--out", "@eval"}},
      {"eval 3D", {"eval", "--ckpt", "@ae3_run/final.vtac", "--dataset", "@d3", "--out", "@eval3"}},
      {"eval identity", {"eval", "--identity", "--dataset", "@d2", "--out", "@eval_id"}},
      {"eval mean latent", {"eval", "--ckpt", "@ae_run/final.vtac", "--dataset", "@d2", "--out", "@eval_mean",
                            "--mean-latent", "@d2"}},
      {"interpolate ae", {"interpolate", "--ckpt", "@ae_run/final.vtac", "--a", "@d2/tree_00000.json", "--b",
                          "@d2/tree_00003.json", "--out", "@interp_ae"}, cli::kExitConfig},
      {"unknown key", {"train-tree", "--config", "@bad.json", "--out", "@bad_run"}, cli::kExitConfig},
      {"existing out", {"train-tree", "--config", "@ae.json", "--out", "@ae_run", "--quiet"}, cli::kExitConfig},
  };
  std::vector<std::string> problems;
  const fs::path dir = ctx.work / "determinism";
  const Snapshot first = run_pipeline(dir, runs, problems);
  const Snapshot second = run_pipeline(dir, runs, problems);

  std::size_t differ = 0;
  std::string first_diff;
  std::set<std::string> keys;
  for (const auto& [k, v] : first) keys.insert(k);
  for (const auto& [k, v] : second) keys.insert(k);
  for (const auto& k : keys) {
    const auto a = first.find(k), b = second.find(k);
    if (a == first.end() || b == second.end() || a->second != b->second) {
      if (differ++ == 0) first_diff = k;
    }
  }
  // A resumed run must end exactly where the uninterrupted one did.
  const auto resumed_same = [&](const std::string& a, const std::string& b) {
    const auto x = first.find("file " + a), y = first.find("file " + b);
    return x != first.end() && y != first.end() && x->second == y->second;
  };
  if (!resumed_same("vessel_run/final.vtac", "vessel_resumed/final.vtac"))
    problems.push_back("resumed vessel run differs");
  if (!resumed_same("ae_run/final.vtac", "ae_resumed/final.vtac")) problems.push_back("resumed tree run differs");

  std::string detail = fmt("%zu commands, %zu outputs compared, %zu differ", runs.size(), keys.size(), differ);
  if (differ) detail += " (first: " + first_diff + ")";
  for (const auto& p : problems) detail += "; " + p;
  return {differ == 0 && problems.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  Context ctx;
  ctx.work = fs::current_path() / "acceptance_work";
  std::vector<int> only;
  app.add_option("--work", ctx.work, "Scratch directory");
  app.add_option("--only", only, "Criteria to run")->delimiter(',');
  app.add_flag("--reuse", ctx.reuse, "Reuse trained checkpoints from the scratch directory");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(ctx.work);

  const std::vector<std::function<Outcome(Context&)>> criteria{criterion_1, criterion_2, criterion_3, criterion_4,
                                                               criterion_5, criterion_6, criterion_7, criterion_8,
                                                               criterion_9, criterion_10};
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i](ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    all = all && o.pass;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail
              << fmt(" [%.1fs]", secs) << std::endl;
  }
  return all ? 0 : 1;
}
