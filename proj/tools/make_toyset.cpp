// Writes a folder of deterministic synthetic PNGs for smoke tests and demos.
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "mkc/dataset.hpp"
#include "mkc/errors.hpp"
#include "mkc/image_io.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic toy image set"};
  std::string out_dir;
  std::size_t count = 8, height = 96, width = 96;
  std::uint64_t seed = 0;
  app.add_option("--out-dir", out_dir, "destination folder")->required();
  app.add_option("--count", count, "number of images");
  app.add_option("--height", height, "image height");
  app.add_option("--width", width, "image width");
  app.add_option("--seed", seed, "first image seed");
  CLI11_PARSE(app, argc, argv);

  try {
    std::filesystem::create_directories(out_dir);
    for (std::size_t i = 0; i < count; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "toy%03zu.png", i);
      const auto path = (std::filesystem::path(out_dir) / name).string();
      mkc::save_image(mkc::synthetic_image(height, width, seed + i), path);
      std::cout << path << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "mkc_toyset: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
