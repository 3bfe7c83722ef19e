#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <zlib.h>

#include "evsplat/event_frontend.hpp"

using namespace evsplat;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "evsplat_event_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::vector<Event> random_events(size_t count, uint64_t seed, int w = 64, int h = 48) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dt(1e-5, 1e-3);
  double t = 0.1;
  std::vector<Event> ev(count);
  for (auto& e : ev) {
    t += dt(rng);
    e.t = t;
    e.x = static_cast<uint16_t>(rng() % w);
    e.y = static_cast<uint16_t>(rng() % h);
    e.polarity = rng() % 2 ? 1 : -1;
  }
  return ev;
}

}  // namespace

TEST_CASE("event text round trip preserves the stream") {
  const std::vector<Event> src = random_events(500, 12);
  const fs::path path = temp_file("roundtrip.txt");
  save_events(src, path.string());
  const std::vector<Event> dst = parse_events(path.string(), 64, 48);
  REQUIRE(dst.size() == src.size());
  for (size_t i = 0; i < src.size(); ++i) {
    REQUIRE(dst[i].t == Catch::Approx(src[i].t).margin(1e-9));
    REQUIRE(dst[i].x == src[i].x);
    REQUIRE(dst[i].y == src[i].y);
    REQUIRE(dst[i].polarity == src[i].polarity);
  }
}

TEST_CASE("event parser accepts both polarity encodings and comments") {
  const fs::path path = temp_file("encodings.txt");
  write_text(path,
             "# header comment\n"
             "\n"
             "0.001 3 4 0\n"
             "  0.002\t5 6 1\n"
             "0.003 7 8 -1\n"
             "0.003 9 1 1\n");  // equal timestamps are allowed
  const std::vector<Event> ev = parse_events(path.string(), 16, 16);
  REQUIRE(ev.size() == 4);
  REQUIRE(ev[0].polarity == -1);  // 0 maps to -1
  REQUIRE(ev[1].polarity == 1);
  REQUIRE(ev[2].polarity == -1);  // signed form passes through
  REQUIRE(ev[3].t == ev[2].t);
  REQUIRE(ev[1].x == 5);
  REQUIRE(ev[1].y == 6);
}

TEST_CASE("event parser errors carry the offending line number") {
  SECTION("bad polarity value") {
    const fs::path path = temp_file("badpol.txt");
    write_text(path, "0.001 1 1 1\n0.002 2 2 7\n");
    REQUIRE_THROWS_WITH(parse_events(path.string()),
                        Catch::Matchers::ContainsSubstring("line 2") &&
                            Catch::Matchers::ContainsSubstring("polarity"));
  }
  SECTION("decreasing timestamps") {
    const fs::path path = temp_file("decrease.txt");
    write_text(path, "0.005 1 1 1\n0.004 2 2 1\n");
    REQUIRE_THROWS_WITH(parse_events(path.string()),
                        Catch::Matchers::ContainsSubstring("line 2") &&
                            Catch::Matchers::ContainsSubstring("decrease"));
  }
  SECTION("malformed number") {
    const fs::path path = temp_file("garbage.txt");
    write_text(path, "0.001 1 1 1\n0.002 oops 1 1\n");
    REQUIRE_THROWS_WITH(parse_events(path.string()),
                        Catch::Matchers::ContainsSubstring("line 2"));
  }
  SECTION("coordinates outside a declared sensor") {
    const fs::path path = temp_file("oob.txt");
    write_text(path, "0.001 100 1 1\n");
    REQUIRE_THROWS_WITH(parse_events(path.string(), 64, 48),
                        Catch::Matchers::ContainsSubstring("outside the sensor"));
    REQUIRE(parse_events(path.string()).size() == 1);  // no size: no bound check
  }
  SECTION("missing file") {
    REQUIRE_THROWS_WITH(parse_events("/nonexistent/events.txt"),
                        Catch::Matchers::ContainsSubstring("cannot open"));
  }
}

TEST_CASE("event parser reads gzip-compressed streams transparently") {
  const std::vector<Event> src = random_events(200, 77);
  const fs::path plain = temp_file("stream.txt");
  save_events(src, plain.string());
  std::ifstream in(plain, std::ios::binary);
  const std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());

  const fs::path gzpath = temp_file("stream.txt.gz");
  gzFile gz = gzopen(gzpath.string().c_str(), "wb");
  REQUIRE(gz != nullptr);
  REQUIRE(gzwrite(gz, text.data(), static_cast<unsigned>(text.size())) ==
          static_cast<int>(text.size()));
  gzclose(gz);

  const std::vector<Event> dst = parse_events(gzpath.string(), 64, 48);
  REQUIRE(dst.size() == src.size());
  for (size_t i = 0; i < src.size(); ++i) {
    REQUIRE(dst[i].x == src[i].x);
    REQUIRE(dst[i].polarity == src[i].polarity);
  }
}

TEST_CASE("keyframe accumulation sums polarities per pixel") {
  std::vector<Event> ev = {
      {0.10, 2, 1, +1}, {0.11, 2, 1, +1}, {0.12, 2, 1, -1},
      {0.13, 0, 0, -1}, {0.14, 3, 2, +1}, {0.20, 9, 9, +1},  // out of the 4x3 image
  };
  const EventKeyframe kf = accumulate_keyframe(ev, 4, 3);
  REQUIRE(kf.n_events == 6);
  REQUIRE(kf.dropped == 1);
  REQUIRE(kf.tau == Catch::Approx(0.5 * (0.10 + 0.20)));
  REQUIRE(kf.delta_tau == Catch::Approx(0.10));
  REQUIRE(kf.delta(2, 1) == 1.0);   // +1 +1 -1
  REQUIRE(kf.delta(0, 0) == -1.0);
  REQUIRE(kf.delta(3, 2) == 1.0);
  REQUIRE(kf.delta(1, 1) == 0.0);
  REQUIRE_THROWS_AS(accumulate_keyframe({}, 4, 3), std::invalid_argument);
}

TEST_CASE("keyframe cutting uses exact non-overlapping windows") {
  const std::vector<Event> ev = random_events(10, 3, 8, 8);
  const std::vector<EventKeyframe> kfs = make_keyframes(ev, 3, 8, 8);
  REQUIRE(kfs.size() == 3);  // the 10th event is discarded
  for (size_t k = 0; k < 3; ++k) {
    REQUIRE(kfs[k].n_events == 3);
    REQUIRE(kfs[k].tau == Catch::Approx(0.5 * (ev[3 * k].t + ev[3 * k + 2].t)));
    REQUIRE(kfs[k].delta_tau == Catch::Approx(ev[3 * k + 2].t - ev[3 * k].t));
  }
  // Windows are a partition: per-pixel sums match a direct accumulation of
  // the first nine events.
  ImageF64 total(8, 8, 0.0);
  for (size_t i = 0; i < 9; ++i) total(ev[i].x, ev[i].y) += ev[i].polarity;
  ImageF64 stitched(8, 8, 0.0);
  for (const auto& kf : kfs)
    for (size_t i = 0; i < stitched.size(); ++i) stitched[i] += kf.delta[i];
  for (size_t i = 0; i < total.size(); ++i) REQUIRE(stitched[i] == total[i]);

  REQUIRE_THROWS_AS(make_keyframes(ev, 0, 8, 8), std::invalid_argument);
  REQUIRE(make_keyframes(std::vector<Event>{}, 5, 8, 8).empty());
}
