#include "support/fixtures.hpp"

#include <atomic>
#include <fstream>
#include <stdexcept>

#include <unistd.h>

namespace tmd::testing {

namespace fs = std::filesystem;

fs::path data_dir() { return TMD_DATA_DIR; }
fs::path fixture_images_dir() { return data_dir() / "fixtures" / "images"; }

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text(const fs::path& p) {
  const auto bytes = read_bytes(p);
  return {bytes.begin(), bytes.end()};
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("tmd-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

Raster random_raster(std::mt19937_64& rng, int width, int height) {
  Raster r(width, height);
  std::uniform_int_distribution<int> byte(0, 255);
  for (auto& p : r.pixels()) {
    p = {static_cast<std::uint8_t>(byte(rng)), static_cast<std::uint8_t>(byte(rng)),
         static_cast<std::uint8_t>(byte(rng)), static_cast<std::uint8_t>(byte(rng))};
  }
  return r;
}

Mask random_mask(std::mt19937_64& rng, int width, int height) {
  Mask m(width, height);
  std::bernoulli_distribution on(0.5);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) m.set(x, y, on(rng));
  }
  return m;
}

}  // namespace tmd::testing
