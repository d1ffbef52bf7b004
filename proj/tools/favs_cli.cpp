#include <iostream>

#include <CLI11.hpp>

#include "favs/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Frequency-band audio-visual segmentation toolkit"};
  app.require_subcommand(1);

  favs::cli::GenFixtureOpts gen_opts;
  CLI::App* gen = app.add_subcommand("gen-fixture", "Synthesize a scene fixture");
  gen->add_option("--seed", gen_opts.seed, "Generator seed");
  gen->add_option("--frames", gen_opts.frames, "Frame count");
  gen->add_option("--size", gen_opts.size, "Frame edge length (power of two >= 32)");
  gen->add_option("--channels", gen_opts.channels, "Feature channels");
  gen->add_option("--texture", gen_opts.texture, "Object texture: checkerboard|smooth");
  gen->add_option("--motion", gen_opts.motion, "Object motion: linear|static");
  gen->add_option("--out", gen_opts.out, "Output container path");

  favs::cli::DecomposeOpts dec_opts;
  CLI::App* dec = app.add_subcommand("decompose", "Band-split one tensor of a container");
  dec->add_option("--input", dec_opts.input, "Input container")->required();
  dec->add_option("--tensor", dec_opts.tensor, "Entry to decompose");
  dec->add_option("--tau", dec_opts.tau, "Four thresholds, highest first");
  dec->add_option("--out-dir", dec_opts.out_dir, "Output directory");

  favs::cli::GenParamsOpts par_opts;
  CLI::App* par = app.add_subcommand("gen-params", "Draw deterministic model parameters");
  par->add_option("--config", par_opts.config, "Config file")->required();
  par->add_option("--out", par_opts.out, "Output container path");

  favs::cli::RunOpts run_opts;
  CLI::App* run = app.add_subcommand("run", "Run the full pipeline on a fixture");
  run->add_option("--config", run_opts.config, "Config file")->required();
  run->add_option("--params", run_opts.params, "Parameter container")->required();
  run->add_option("--fixture", run_opts.fixture, "Fixture container")->required();
  run->add_option("--out", run_opts.out, "Output directory");
  run->add_flag("--oracle-mask", run_opts.oracle_mask,
                "Replace the predicted mask with ground truth");

  favs::cli::RouteStatsOpts rs_opts;
  CLI::App* rs = app.add_subcommand("route-stats", "Dump per-stage routing decisions");
  rs->add_option("--config", rs_opts.config, "Config file")->required();
  rs->add_option("--params", rs_opts.params, "Parameter container")->required();
  rs->add_option("--fixture", rs_opts.fixture, "Fixture container")->required();
  rs->add_option("--out", rs_opts.out, "Output CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  favs::cli::CommandResult result;
  if (gen->parsed()) result = favs::cli::cmd_gen_fixture(gen_opts);
  if (dec->parsed()) result = favs::cli::cmd_decompose(dec_opts);
  if (par->parsed()) result = favs::cli::cmd_gen_params(par_opts);
  if (run->parsed()) result = favs::cli::cmd_run(run_opts);
  if (rs->parsed()) result = favs::cli::cmd_route_stats(rs_opts);
  return result.exit_code;
}
