#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "temp_dir.hpp"
#include "vwseg/annotation_io.hpp"

using namespace vwseg;
namespace fs = std::filesystem;

namespace {


void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

void write_header(const fs::path& p, int x, int y, int z, const std::string& raw) {
  write_text(p, "{\"dims\":[" + std::to_string(x) + "," + std::to_string(y) + "," +
                    std::to_string(z) + "],\"dtype\":\"u16le\",\"spacing\":[0.6,0.6,0.6],\"raw\":\"" +
                    raw + "\"}");
}

void sparse_file(const fs::path& p, std::uintmax_t bytes) {
  { std::ofstream(p, std::ios::binary); }
  fs::resize_file(p, bytes);
}

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::ParseError;
}

Contour tri(Artery a, Boundary b, int slice, double off = 0) {
  Contour c;
  c.artery = a;
  c.boundary = b;
  c.slice_index = slice;
  c.points = {{0 + off, 0}, {4 + off, 0}, {0 + off, 4}};
  return c;
}

}  // namespace

TEST_CASE("read_volume validates sizes") {
  TempDir dir;
  write_header(dir.path / "one.json", 1, 1, 1, "one.raw");
  sparse_file(dir.path / "one.raw", 2);
  auto v = read_volume(dir.path / "one.json");
  CHECK(v.dims == std::array<int, 3>{1, 1, 1});
  CHECK(v.voxels == std::vector<std::uint16_t>{0});
  CHECK(v.spacing[0] == doctest::Approx(0.6));

  write_header(dir.path / "short.json", 2, 2, 2, "short.raw");
  sparse_file(dir.path / "short.raw", 15);
  CHECK(code_of([&] { read_volume(dir.path / "short.json"); }) == ErrorCode::SizeMismatch);

  write_header(dir.path / "missing.json", 2, 2, 2, "nope.raw");
  CHECK(code_of([&] { read_volume(dir.path / "missing.json"); }) == ErrorCode::SizeMismatch);

  write_text(dir.path / "bad.json", "{\"dims\":[2,2],\"raw\":\"x\"}");
  CHECK(code_of([&] { read_volume(dir.path / "bad.json"); }) == ErrorCode::ParseError);
  write_text(dir.path / "garbage.json", "{not json");
  CHECK(code_of([&] { read_volume(dir.path / "garbage.json"); }) == ErrorCode::ParseError);
}

TEST_CASE("read_volume handles the full 720 and 640 cubes") {
  TempDir dir;
  const std::uintmax_t bytes720 = 720ull * 720 * 720 * 2;
  sparse_file(dir.path / "cube.raw", bytes720);
  write_header(dir.path / "cube720.json", 720, 720, 720, "cube.raw");
  write_header(dir.path / "cube640.json", 640, 640, 640, "cube.raw");
  CHECK(code_of([&] { read_volume(dir.path / "cube640.json"); }) == ErrorCode::SizeMismatch);
  auto v = read_volume(dir.path / "cube720.json");
  CHECK(v.dims == std::array<int, 3>{720, 720, 720});
  CHECK(v.voxels.size() == 720ull * 720 * 720);
}

TEST_CASE("volume raw buffer round trips byte-identically") {
  TempDir dir;
  Volume v({5, 4, 3}, {0.5, 0.5, 1.0});
  std::mt19937 rng(1);
  for (auto& x : v.voxels) x = static_cast<std::uint16_t>(rng());
  write_volume(v, dir.path / "v.json", "v.raw");
  auto back = read_volume(dir.path / "v.json");
  CHECK(back.voxels == v.voxels);
  CHECK(back.dims == v.dims);
  write_volume(back, dir.path / "w.json", "w.raw");
  std::ifstream a(dir.path / "v.raw", std::ios::binary), b(dir.path / "w.raw", std::ios::binary);
  std::string sa{std::istreambuf_iterator<char>(a), {}}, sb{std::istreambuf_iterator<char>(b), {}};
  CHECK(sa == sb);
  // x-fastest little-endian layout
  CHECK(static_cast<unsigned char>(sa[2]) == (v.at(1, 0, 0) & 0xff));
  CHECK(static_cast<unsigned char>(sa[5 * 2 + 1]) == (v.at(0, 1, 0) >> 8));
  CHECK(v.slice(2).at(4, 3) == v.voxels.back());
}

TEST_CASE("read_annotations parses the stand-in schema") {
  auto set = annotations_from_json(R"({"volume_id":"P1","slices":[{"index":10,"contours":[
      {"artery":"ICAL","boundary":"lumen","points":[[0,0],[4,0],[0,4]]}]}]})");
  CHECK(set.volume_id() == "P1");
  REQUIRE(set.size() == 1);
  CHECK(set.entries()[0].points == std::vector<Point>{{0, 0}, {4, 0}, {0, 4}});
  CHECK(set.entries()[0].slice_index == 10);

  auto pair = annotations_from_json(R"({"volume_id":"P1","slices":[{"index":5,"contours":[
      {"artery":"ICAR","boundary":"outer","points":[[0,0],[9,0],[0,9]]},
      {"artery":"ICAR","boundary":"lumen","points":[[1,1],[4,1],[1,4]]}]}]})");
  auto groups = pair.grouped();
  REQUIRE(groups.size() == 1);
  CHECK(groups.begin()->first == std::pair{5, Artery::ICAR});
  CHECK(groups.begin()->second.size() == 2);
  CHECK(pair.entries()[0].boundary == Boundary::Lumen);

  CHECK(code_of([] {
          annotations_from_json(R"({"volume_id":"x","slices":[{"index":0,"contours":[
          {"artery":"VA","boundary":"lumen","points":[[0,0],[1,0],[0,1]]}]}]})");
        }) == ErrorCode::ParseError);
  CHECK(code_of([] {
          annotations_from_json(R"({"volume_id":"x","slices":[{"index":0,"contours":[
          {"artery":"ICAL","boundary":"wall","points":[[0,0],[1,0],[0,1]]}]}]})");
        }) == ErrorCode::ParseError);
  CHECK(code_of([] {
          annotations_from_json(R"({"volume_id":"x","slices":[{"index":0,"contours":[
          {"artery":"ICAL","boundary":"lumen","points":[[0,0],[1,0]]}]}]})");
        }) == ErrorCode::InvalidContour);
}

TEST_CASE("write_annotations") {
  TempDir dir;
  AnnotationSet empty("E");
  write_annotations(empty, dir.path / "e.json");
  auto e = read_annotations(dir.path / "e.json");
  CHECK(e.empty());
  CHECK(e.volume_id() == "E");

  AnnotationSet all("V");
  for (auto b : {Boundary::Outer, Boundary::Lumen}) {
    for (auto a : {Artery::ECAR, Artery::ICAL, Artery::ECAL, Artery::ICAR}) all.add(tri(a, b, 3));
  }
  REQUIRE(all.size() == 8);
  int i = 0;
  for (auto a : kAllArteries) {
    for (auto b : {Boundary::Lumen, Boundary::Outer}) {
      CHECK(all.entries()[i].artery == a);
      CHECK(all.entries()[i].boundary == b);
      ++i;
    }
  }
  write_annotations(all, dir.path / "all.json");
  CHECK(read_annotations(dir.path / "all.json") == all);

  CHECK(code_of([&] { write_annotations(all, dir.path / "no_such_dir" / "x.json"); }) ==
        ErrorCode::IoError);
}

TEST_CASE("annotation round trip is point-exact for random sets") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> coord(-10.0, 800.0);
  std::uniform_int_distribution<int> slice(0, 30), art(0, 3), bnd(0, 1), npts(3, 40);
  for (int trial = 0; trial < 50; ++trial) {
    AnnotationSet s("vol-" + std::to_string(trial));
    const int n = trial % 12;
    for (int k = 0; k < n; ++k) {
      Contour c;
      c.slice_index = slice(rng);
      c.artery = static_cast<Artery>(art(rng));
      c.boundary = static_cast<Boundary>(bnd(rng));
      c.points.resize(npts(rng));
      for (auto& p : c.points) p = {coord(rng), trial % 2 ? std::round(coord(rng)) : coord(rng)};
      s.add(c);
    }
    auto back = annotations_from_json(annotations_to_json(s));
    REQUIRE(back == s);
  }
}

TEST_CASE("normalize_patch") {
  Patch p(2, 2);
  p.data = {0, 100, 200, 400};
  CHECK(normalize_patch(p).data == std::vector<double>{0, 0.25, 0.5, 1.0});

  Patch c(2, 2, 7.0);
  CHECK(normalize_patch(c).data == std::vector<double>(4, 0.0));

  Patch u(2, 2);
  u.data = {0, 0.3, 1.0, 0.7};
  CHECK(normalize_patch(u) == u);

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> d(-500, 3000);
  for (int t = 0; t < 50; ++t) {
    Patch r(7, 5);
    for (auto& v : r.data) v = d(rng);
    auto n = normalize_patch(r);
    for (auto v : n.data) REQUIRE((v >= 0.0 && v <= 1.0));
    REQUIRE(normalize_patch(n) == n);
  }
}
