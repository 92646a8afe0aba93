#include <doctest.h>

#include <cmath>
#include <random>

#include "support/fixtures.hpp"
#include "tmd/digest.hpp"
#include "tmd/error.hpp"
#include "tmd/png_codec.hpp"
#include "tmd/texture_processor.hpp"

using namespace tmd;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected tmd::Error");
  return ErrorCode::NotFound;
}

Raster gradient(int w, int h) {
  Raster r(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      r.at(x, y) = {static_cast<std::uint8_t>(x * 255 / std::max(w - 1, 1)),
                    static_cast<std::uint8_t>(y * 255 / std::max(h - 1, 1)),
                    static_cast<std::uint8_t>((x * 7 + y * 13) % 256), 255};
  return r;
}

/// Reference bilinear sampler written as a four-tap weighted sum.
Rgba reference_sample(const Raster& src, double fx, double fy) {
  fx = std::min(std::max(fx, 0.0), src.width() - 1.0);
  fy = std::min(std::max(fy, 0.0), src.height() - 1.0);
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const int x1 = std::min(x0 + 1, src.width() - 1), y1 = std::min(y0 + 1, src.height() - 1);
  const long double ax = fx - x0, ay = fy - y0;
  const long double w00 = (1 - ax) * (1 - ay), w10 = ax * (1 - ay), w01 = (1 - ax) * ay, w11 = ax * ay;
  auto ch = [&](auto get) {
    const long double v = w00 * get(src.at(x0, y0)) + w10 * get(src.at(x1, y0)) + w01 * get(src.at(x0, y1)) +
                          w11 * get(src.at(x1, y1));
    return static_cast<std::uint8_t>(std::floor(v + 0.5L));
  };
  return {ch([](const Rgba& p) { return p.r; }), ch([](const Rgba& p) { return p.g; }),
          ch([](const Rgba& p) { return p.b; }), ch([](const Rgba& p) { return p.a; })};
}

Provenance sample_provenance() {
  Provenance p;
  p.request_id = "01HZX";
  p.scenario = ScenarioKind::CreativePrompt;
  p.backend_id = "offline-t2i";
  p.original_prompt = "crack on the rail";
  p.tuned_prompt = "A transverse crack, approximately 2 inches long, located on the head of the rail.";
  p.seed = 7;
  p.meter.request_id = p.request_id;
  p.meter.scenario = p.scenario;
  p.meter.backend_id = p.backend_id;
  p.meter.prompt_tokens = 12;
  p.meter.completion_tokens = 20;
  p.meter.wall_time_ms = 41;
  p.meter.stages = {{"tune", 0, 10}, {"generate", 11, 40}};
  return p;
}

}  // namespace

TEST_CASE("center square crop rectangle") {
  CHECK(center_square(640, 480) == CropRect{80, 0, 560, 480});
  CHECK(center_square(480, 640) == CropRect{0, 80, 480, 560});
  CHECK(center_square(5, 2) == CropRect{1, 0, 3, 2});
  CHECK(center_square(7, 7) == CropRect{0, 0, 7, 7});
}

TEST_CASE("standardize 640x480 to 512") {
  const Raster src = gradient(640, 480);
  const Raster out = standardize_pixels(src, StandardizationTarget::of(512));
  REQUIRE(out.width() == 512);
  REQUIRE(out.height() == 512);

  const Raster square = crop(src, {80, 0, 560, 480});
  CHECK(square.at(0, 0) == src.at(80, 0));
  CHECK(square.at(479, 479) == src.at(559, 479));

  const double scale = 480.0 / 512.0;
  std::size_t exact = 0;
  for (int y = 0; y < 512; ++y) {
    for (int x = 0; x < 512; ++x) {
      const Rgba want = reference_sample(square, (x + 0.5) * scale - 0.5, (y + 0.5) * scale - 0.5);
      const Rgba got = out.at(x, y);
      REQUIRE(std::abs(want.r - got.r) <= 1);
      REQUIRE(std::abs(want.g - got.g) <= 1);
      REQUIRE(std::abs(want.b - got.b) <= 1);
      exact += want == got;
    }
  }
  CHECK(static_cast<double>(exact) / (512.0 * 512.0) > 0.999);
  // pinned output of the scaler for this input
  CHECK(sha256_hex(out.to_bytes()) == "d38eb4ec604a13e5091d7351c3870b5c2ffcb77528c78af03aa50e5a68a419b5");
}

TEST_CASE("standardize identity and errors") {
  std::mt19937_64 rng(1);
  const Raster sq = testing::random_raster(rng, 512, 512);
  CHECK(standardize_pixels(sq, StandardizationTarget::of(512)) == sq);
  CHECK(code_of([] { standardize(Raster(0, 0), StandardizationTarget::of(512)); }) == ErrorCode::EmptyImage);
  CHECK(code_of([] { StandardizationTarget::of(300); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("standardize is idempotent and yields power-of-two squares") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dim(1, 200);
  const int sizes[] = {256, 512, 1024};
  for (int i = 0; i < 50; ++i) {
    const Raster raw = testing::random_raster(rng, dim(rng), dim(rng));
    const auto target = StandardizationTarget::of(sizes[i % 3]);
    const Raster once = standardize_pixels(raw, target);
    REQUIRE(is_power_of_two(once.width()));
    REQUIRE(once.width() == once.height());
    REQUIRE(standardize_pixels(once, target) == once);
  }
}

TEST_CASE("standardize never invents alpha") {
  std::mt19937_64 rng(3);
  Raster raw = testing::random_raster(rng, 123, 77);
  for (auto& p : raw.pixels()) p.a = 255;
  for (const auto& p : standardize_pixels(raw, StandardizationTarget::of(256)).pixels()) REQUIRE(p.a == 255);
}

TEST_CASE("resize downscale and upscale match the reference sampler") {
  std::mt19937_64 rng(11);
  for (auto [sw, sh, dw, dh] : {std::array{37, 29, 16, 16}, {16, 16, 50, 31}, {3, 1, 8, 8}, {1, 1, 4, 4}}) {
    const Raster src = testing::random_raster(rng, sw, sh);
    const Raster out = resize_bilinear(src, dw, dh);
    const double sx = static_cast<double>(sw) / dw, sy = static_cast<double>(sh) / dh;
    for (int y = 0; y < dh; ++y) {
      for (int x = 0; x < dw; ++x) {
        const Rgba want = reference_sample(src, (x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5);
        const Rgba got = out.at(x, y);
        REQUIRE(std::abs(want.r - got.r) <= 1);
        REQUIRE(std::abs(want.a - got.a) <= 1);
      }
    }
  }
}

TEST_CASE("composite_inpaint equals the per-pixel selector") {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 100; ++i) {
    const Raster base = testing::random_raster(rng, 64, 64);
    const Raster patch = testing::random_raster(rng, 64, 64);
    const Mask mask = testing::random_mask(rng, 64, 64);
    const Raster out = composite_inpaint(base, mask, patch);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) REQUIRE(out.at(x, y) == (mask.at(x, y) ? patch.at(x, y) : base.at(x, y)));
  }
  const Raster base = testing::random_raster(rng, 64, 64);
  const Raster patch = testing::random_raster(rng, 64, 64);
  CHECK(composite_inpaint(base, Mask(64, 64, 0), patch) == base);
  CHECK(composite_inpaint(base, Mask(64, 64, 1), patch) == patch);
  CHECK(code_of([&] { composite_inpaint(base, Mask(32, 64), patch); }) == ErrorCode::DimensionMismatch);
  CHECK(code_of([&] { composite_inpaint(base, Mask(64, 64), Raster(64, 63)); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("artifact encode/decode") {
  std::mt19937_64 rng(5);
  TextureArtifact a;
  a.pixels = testing::random_raster(rng, 256, 256);
  a.provenance = sample_provenance();
  CHECK(a.is_valid());

  const auto bytes = encode_artifact(a);
  const auto types = png_chunk_types(bytes);
  CHECK(types.front() == "IHDR");
  CHECK(std::find(types.begin(), types.end(), "sRGB") != types.end());
  CHECK(std::find(types.begin(), types.end(), "tEXt") != types.end());

  const auto back = decode_artifact(bytes);
  CHECK(back.pixels == a.pixels);
  CHECK(back.provenance == a.provenance);
  CHECK(back.format == "png");

  SUBCASE("reproducible embedding drops per-run fields") {
    const auto r = decode_artifact(encode_artifact(a, ProvenanceEmbed::reproducible));
    CHECK(r.pixels == a.pixels);
    CHECK(r.provenance.request_id.empty());
    CHECK(r.provenance.meter.wall_time_ms == 0);
    CHECK(r.provenance.meter.stages.empty());
    CHECK(r.provenance.tuned_prompt == a.provenance.tuned_prompt);
    auto other = a;
    other.provenance.request_id = "another";
    other.provenance.meter.request_id = "another";
    other.provenance.meter.wall_time_ms = 999;
    CHECK(encode_artifact(other, ProvenanceEmbed::reproducible) == encode_artifact(a, ProvenanceEmbed::reproducible));
  }
  SUBCASE("non-ascii prompts survive") {
    a.provenance.original_prompt = "fissure sur le rail \xE2\x80\x94 \xC3\xA9t\xC3\xA9";
    CHECK(decode_artifact(encode_artifact(a)).provenance == a.provenance);
  }
  SUBCASE("corrupt inputs") {
    CHECK(code_of([&] { decode_artifact(std::span(bytes).first(bytes.size() / 2)); }) == ErrorCode::CorruptFile);
    CHECK(code_of([&] { decode_artifact(std::span(bytes).first(10)); }) == ErrorCode::CorruptFile);
    auto flipped = bytes;
    flipped[40] ^= 0xFF;
    CHECK(code_of([&] { decode_artifact(flipped); }) == ErrorCode::CorruptFile);
    CHECK(code_of([&] { decode_artifact(encode_png(a.pixels)); }) == ErrorCode::CorruptFile);
    const std::vector<std::uint8_t> junk{1, 2, 3};
    CHECK(code_of([&] { decode_artifact(junk); }) == ErrorCode::CorruptFile);
  }
}

TEST_CASE("artifact validity") {
  TextureArtifact a;
  a.pixels = Raster(256, 128);
  a.provenance = sample_provenance();
  CHECK_FALSE(a.is_valid());
  a.pixels = Raster(256, 256);
  CHECK(a.is_valid());
  a.provenance.tuned_prompt.clear();
  CHECK_FALSE(a.is_valid());
  CHECK(is_power_of_two(1024));
  CHECK_FALSE(is_power_of_two(0));
  CHECK_FALSE(is_power_of_two(480));
}

TEST_CASE("png codec reads other colour types") {
  // 2x1 greyscale PNG (black, white) written by Pillow
  const auto png =
      base64_decode("iVBORw0KGgoAAAANSUhEUgAAAAIAAAABCAAAAADRSSBWAAAAC0lEQVR4nGNg+A8AAQIBAEK+vGgAAAAASUVORK5CYII=");
  const auto d = decode_png(png);
  REQUIRE(d.image.width() == 2);
  REQUIRE(d.image.height() == 1);
  CHECK(d.image.at(0, 0) == Rgba{0, 0, 0, 255});
  CHECK(d.image.at(1, 0) == Rgba{255, 255, 255, 255});
}
