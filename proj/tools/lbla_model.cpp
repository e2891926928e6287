// Creates seeded encoder weight files from a config and runs them on random features.

#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "lbla/conformer.hpp"
#include "lbla/weights.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Locality-biased Conformer encoder weights"};
  app.require_subcommand(1);

  std::string config_path, out_path;
  std::uint64_t seed = 0;
  auto* init = app.add_subcommand("init", "Write seeded weights for a config file");
  init->add_option("--config", config_path, "key = value config file")->required();
  init->add_option("--out", out_path, "Weight file to write")->required();
  init->add_option("--seed", seed, "Initialization seed");

  std::string weights_path;
  long frames = 32;
  std::uint64_t input_seed = 0;
  auto* run = app.add_subcommand("run", "Run the encoder on seeded random features");
  run->add_option("--weights", weights_path, "Weight file")->required();
  run->add_option("--frames", frames, "Sequence length T")->check(CLI::PositiveNumber);
  run->add_option("--seed", input_seed, "Input seed");

  auto* show = app.add_subcommand("show", "Print the config stored in a weight file");
  show->add_option("--weights", weights_path, "Weight file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (init->parsed()) {
      const lbla::ModelConfig cfg = lbla::load_config(config_path);
      lbla::save_weights(out_path, lbla::init_encoder(seed, cfg), cfg);
      std::cout << "wrote " << cfg.num_layers << " blocks to " << out_path << "\n";
    } else if (run->parsed()) {
      const lbla::EncoderModel model = lbla::load_weights(weights_path);
      lbla::Rng rng(input_seed);
      const lbla::Tensord x = lbla::uniform_tensor(rng, frames, model.config.d_model, -1.0, 1.0);
      const lbla::Tensord y = lbla::encoder_forward(x, model.blocks, model.config);
      std::printf("output %ldx%ld checksum %.17g finite %s\n", static_cast<long>(y.rows()),
                  static_cast<long>(y.cols()), y.sum(), y.allFinite() ? "yes" : "no");
    } else if (show->parsed()) {
      std::cout << lbla::format_config(lbla::load_weights(weights_path).config);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
