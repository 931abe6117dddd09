#include <CLI11.hpp>

#include <iostream>

#include "vetta/cli/commands.hpp"
#include "vetta/tree/tree.hpp"

namespace vetta::cli {

int run_cli(int argc, char** argv) {
  CLI::App app{"Vessel tree autoencoder: data generation, training, reconstruction and evaluation", "vetta"};
  app.require_subcommand(1);

  GenDataOptions gen;
  auto* c_gen = app.add_subcommand("gen-data", "Write a synthetic tree dataset");
  c_gen->add_option("--out", gen.out, "Output directory")->required();
  c_gen->add_option("--count", gen.count, "Number of trees");
  c_gen->add_option("--dims", gen.dims, "2 or 3");
  c_gen->add_option("--depth", gen.depth, "Maximum node depth");
  c_gen->add_option("--seed", gen.seed, "Base seed");
  c_gen->add_flag("--force", gen.force, "Write into a non-empty directory");

  TrainOptions tv, tt;
  std::string tv_resume, tt_resume;
  auto* c_tv = app.add_subcommand("train-vessel", "Train the vessel autoencoder");
  auto* c_tt = app.add_subcommand("train-tree", "Train the tree autoencoder");
  for (auto [cmd, o, resume] : {std::tuple{c_tv, &tv, &tv_resume}, std::tuple{c_tt, &tt, &tt_resume}}) {
    cmd->add_option("--config", o->config, "JSON run config")->required();
    cmd->add_option("--out", o->out, "Output directory")->required();
    cmd->add_option("--resume", *resume, "Checkpoint to resume from");
    cmd->add_flag("--force", o->force, "Write into a non-empty directory");
    cmd->add_flag("--quiet", o->quiet, "No progress on stderr");
  }
  std::size_t steps_per_tree = 0;
  c_tt->add_option("--steps-per-tree", steps_per_tree, "Decoding steps sampled per tree (overrides the config)");

  std::string rc_ckpt, rc_input, rc_out;
  auto* c_rc = app.add_subcommand("reconstruct", "Encode and decode one tree");
  c_rc->add_option("--ckpt", rc_ckpt)->required();
  c_rc->add_option("--input", rc_input)->required();
  c_rc->add_option("--out", rc_out, "Output tree JSON (an SVG is written next to it for 2D)")->required();

  std::string ip_ckpt, ip_a, ip_b, ip_out;
  std::size_t ip_steps = 10;
  auto* c_ip = app.add_subcommand("interpolate", "Decode trees along a latent line");
  c_ip->add_option("--ckpt", ip_ckpt)->required();
  c_ip->add_option("--a", ip_a)->required();
  c_ip->add_option("--b", ip_b)->required();
  c_ip->add_option("--steps", ip_steps);
  c_ip->add_option("--out", ip_out)->required();

  EvalOptions ev;
  std::string ev_ckpt, ev_mean;
  auto* c_ev = app.add_subcommand("eval", "Metrics over a held-out dataset");
  c_ev->add_option("--ckpt", ev_ckpt);
  c_ev->add_option("--dataset", ev.dataset)->required();
  c_ev->add_option("--out", ev.out)->required();
  c_ev->add_flag("--identity", ev.identity, "Compare every tree with itself");
  c_ev->add_option("--mean-latent", ev_mean, "Decode the mean latent of this dataset for every sample");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (c_gen->parsed()) {
      gen_data(gen);
    } else if (c_tv->parsed() || c_tt->parsed()) {
      const bool is_tree = c_tt->parsed();
      TrainOptions& o = is_tree ? tt : tv;
      const std::string& resume = is_tree ? tt_resume : tv_resume;
      if (!resume.empty()) o.resume = resume;
      nlohmann::json summary;
      if (is_tree && steps_per_tree > 0) {
        // Rewrite the config with the override next to the outputs.
        auto j = nlohmann::json::parse(std::ifstream(o.config));
        j["schedule"]["steps_per_tree"] = steps_per_tree;
        if (j.contains("dataset"))
          j["dataset"] = fs::absolute(o.config.parent_path() / j["dataset"].get<std::string>()).string();
        if (j.contains("vessel_checkpoint"))
          j["vessel_checkpoint"] =
              fs::absolute(o.config.parent_path() / j["vessel_checkpoint"].get<std::string>()).string();
        fs::create_directories(o.out);
        const fs::path patched = o.out / "config.input.json";
        std::ofstream(patched) << j.dump(2) << "\n";
        o.config = patched;
        o.force = true;
      }
      summary = is_tree ? train_tree(o) : train_vessel(o);
      std::cout << summary.dump() << "\n";
    } else if (c_rc->parsed()) {
      std::cout << reconstruct(rc_ckpt, rc_input, rc_out).dump() << "\n";
    } else if (c_ip->parsed()) {
      std::cout << interpolate(ip_ckpt, ip_a, ip_b, ip_steps, ip_out).dump() << "\n";
    } else if (c_ev->parsed()) {
      if (!ev.identity && ev_ckpt.empty()) throw UsageError("eval: --ckpt is required unless --identity is given");
      ev.ckpt = ev_ckpt;
      if (!ev_mean.empty()) ev.mean_latent_from = ev_mean;
      std::cout << evaluate(ev).dump() << "\n";
    }
  } catch (const model::TrainingAborted& e) {
    std::cerr << "vetta: training aborted at step " << e.step() << ": " << e.what() << "\n";
    return kExitNumerical;
  } catch (const nn::NumericalError& e) {
    std::cerr << "vetta: numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const UsageError& e) {
    std::cerr << "vetta: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "vetta: " << e.what() << "\n";
    return kExitConfig;
  } catch (const tree::TreeError& e) {
    std::cerr << "vetta: invalid tree: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "vetta: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace vetta::cli
