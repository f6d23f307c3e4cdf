#include <iostream>

#include "CLI11.hpp"
#include "efv/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Dual-stream event classification: frames + voxel graph with bottleneck fusion"};
  app.require_subcommand(1);
  efv::CommandOptions o;
  std::string input, output, config, checkpoint, metrics, eval_input, confusion;

  auto add_common = [&](CLI::App* c) {
    c->add_option("--config", config, "INI configuration file");
    c->add_option("--seed", o.seed, "seed for every random choice");
  };
  auto* convert = app.add_subcommand("convert", "convert between N-MNIST binary and CSV");
  convert->add_option("--input", input)->required();
  convert->add_option("--output", output)->required();
  convert->add_option("--format", o.format, "output format")->check(CLI::IsMember({"nmnist", "csv"}));
  add_common(convert);

  auto* synth = app.add_subcommand("synth", "write a seeded synthetic dataset");
  synth->add_option("--output", output)->required();
  synth->add_option("--kind", o.kind)->check(CLI::IsMember({"digits", "splitcue"}));
  synth->add_option("--per-class", o.per_class);
  synth->add_option("--format", o.format)->check(CLI::IsMember({"nmnist", "csv"}));
  add_common(synth);

  auto* pre = app.add_subcommand("preprocess", "dataset directory -> sample cache");
  pre->add_option("--input", input)->required();
  pre->add_option("--output", output)->required();
  add_common(pre);

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--input", input, "cache or dataset directory")->required();
  train->add_option("--eval-input", eval_input, "held-out cache or dataset directory");
  train->add_option("--output", output, "run directory");
  train->add_option("--mode", o.mode)->check(CLI::IsMember({"fused", "image_only", "voxel_only"}));
  train->add_option("--epochs", o.epochs);
  train->add_option("--checkpoint", checkpoint);
  train->add_option("--metrics", metrics, "training log CSV");
  add_common(train);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--input", input)->required();
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--mode", o.mode)->check(CLI::IsMember({"fused", "image_only", "voxel_only"}));
  eval->add_option("--metrics", metrics, "confusion matrix CSV");
  eval->add_option("--output", output, "result manifest JSON");
  add_common(eval);

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of a seeded micro model");
  grad->add_option("--mode", o.mode)->check(CLI::IsMember({"fused", "image_only", "voxel_only"}));
  grad->add_flag("--quiet", o.quiet);
  add_common(grad);

  auto* plot = app.add_subcommand("plot", "training log (and confusion CSV) -> SVG + CSV");
  plot->add_option("--input", input)->required();
  plot->add_option("--confusion", confusion);
  plot->add_option("--output", output)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : efv::kExitInput;
  }
  o.input = input;
  o.output = output;
  o.config = config;
  o.checkpoint = checkpoint;
  o.metrics = metrics;
  o.eval_input = eval_input;
  o.confusion = confusion;
  return efv::run_command(app.get_subcommands().front()->get_name(), o, std::cout, std::cerr);
}
