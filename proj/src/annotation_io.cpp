#include "vwseg/annotation_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <tuple>

#include <json.hpp>

namespace vwseg {

using nlohmann::json;

std::string_view to_string(Artery a) {
  switch (a) {
    case Artery::ICAL: return "ICAL";
    case Artery::ICAR: return "ICAR";
    case Artery::ECAL: return "ECAL";
    case Artery::ECAR: return "ECAR";
  }
  return "?";
}

std::string_view to_string(Boundary b) { return b == Boundary::Lumen ? "lumen" : "outer"; }

Artery parse_artery(std::string_view s) {
  for (auto a : kAllArteries) {
    if (to_string(a) == s) return a;
  }
  throw Error(ErrorCode::ParseError, "unknown artery tag '" + std::string(s) + "'");
}

Boundary parse_boundary(std::string_view s) {
  if (s == "lumen") return Boundary::Lumen;
  if (s == "outer") return Boundary::Outer;
  throw Error(ErrorCode::ParseError, "unknown boundary tag '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// AnnotationSet

namespace {

auto sort_key(const Contour& c) {
  return std::tuple(c.slice_index, static_cast<int>(c.artery), static_cast<int>(c.boundary));
}

}  // namespace

void AnnotationSet::add(Contour c) {
  if (c.points.size() < 3) {
    throw Error(ErrorCode::InvalidContour, "contour needs at least 3 points");
  }
  auto key = sort_key(c);
  auto pos = std::upper_bound(entries_.begin(), entries_.end(), key,
                              [](const auto& k, const Contour& e) { return k < sort_key(e); });
  entries_.insert(pos, std::move(c));
}

const Contour* AnnotationSet::find(int slice, Artery artery, Boundary boundary) const {
  for (const auto& c : entries_) {
    if (c.slice_index == slice && c.artery == artery && c.boundary == boundary) return &c;
  }
  return nullptr;
}

std::map<std::pair<int, Artery>, std::vector<const Contour*>> AnnotationSet::grouped() const {
  std::map<std::pair<int, Artery>, std::vector<const Contour*>> out;
  for (const auto& c : entries_) out[{c.slice_index, c.artery}].push_back(&c);
  return out;
}

// ---------------------------------------------------------------------------
// Volume

Volume::Volume(std::array<int, 3> d, std::array<double, 3> s) : dims(d), spacing(s) {
  if (d[0] < 1 || d[1] < 1 || d[2] < 1) {
    throw Error(ErrorCode::ShapeError, "volume dimensions must be positive");
  }
  voxels.assign(static_cast<std::size_t>(d[0]) * d[1] * d[2], 0);
}

std::uint16_t& Volume::at(int x, int y, int z) {
  return voxels[(static_cast<std::size_t>(z) * dims[1] + y) * dims[0] + x];
}

std::uint16_t Volume::at(int x, int y, int z) const {
  return voxels[(static_cast<std::size_t>(z) * dims[1] + y) * dims[0] + x];
}

Slice Volume::slice(int z) const {
  if (z < 0 || z >= dims[2]) throw Error(ErrorCode::ShapeError, "slice index out of range");
  Slice s(dims[0], dims[1]);
  auto first = voxels.begin() + static_cast<std::ptrdiff_t>(z) * dims[0] * dims[1];
  std::copy(first, first + static_cast<std::ptrdiff_t>(s.size()), s.data.begin());
  return s;
}

void Volume::set_slice(int z, const Slice& s) {
  if (z < 0 || z >= dims[2] || s.width != dims[0] || s.height != dims[1]) {
    throw Error(ErrorCode::ShapeError, "slice does not fit volume");
  }
  std::copy(s.data.begin(), s.data.end(),
            voxels.begin() + static_cast<std::ptrdiff_t>(z) * dims[0] * dims[1]);
}

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, what + ": " + e.what());
  }
}

template <class F>
auto with_schema(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, what + ": " + e.what());
  }
}

}  // namespace

Volume read_volume(const std::filesystem::path& header_path) {
  auto header = parse_json(slurp(header_path), "volume header");
  std::array<int, 3> dims{};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::string raw;
  with_schema("volume header", [&] {
    auto d = header.at("dims");
    if (!d.is_array() || d.size() != 3) throw Error(ErrorCode::ParseError, "dims must be [x,y,z]");
    for (int i = 0; i < 3; ++i) {
      dims[i] = d[i].get<int>();
      if (dims[i] < 1) throw Error(ErrorCode::ParseError, "dims must be positive");
    }
    if (header.value("dtype", std::string("u16le")) != "u16le") {
      throw Error(ErrorCode::ParseError, "only dtype u16le is supported");
    }
    if (header.contains("spacing")) {
      auto s = header.at("spacing");
      if (!s.is_array() || s.size() != 3) throw Error(ErrorCode::ParseError, "bad spacing");
      for (int i = 0; i < 3; ++i) spacing[i] = s[i].get<double>();
    }
    raw = header.at("raw").get<std::string>();
    return 0;
  });

  auto raw_path = header_path.parent_path() / raw;
  std::ifstream in(raw_path, std::ios::binary | std::ios::ate);
  if (!in) throw Error(ErrorCode::SizeMismatch, "raw voxel file missing: " + raw_path.string());
  const auto expected = static_cast<std::uintmax_t>(dims[0]) * dims[1] * dims[2] * 2;
  const auto actual = static_cast<std::uintmax_t>(in.tellg());
  if (actual != expected) {
    throw Error(ErrorCode::SizeMismatch, "raw file has " + std::to_string(actual) +
                                             " bytes, header declares " + std::to_string(expected));
  }
  Volume vol(dims, spacing);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(vol.voxels.data()), static_cast<std::streamsize>(expected));
  if (!in) throw Error(ErrorCode::SizeMismatch, "short read on " + raw_path.string());
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& v : vol.voxels) v = static_cast<std::uint16_t>((v >> 8) | (v << 8));
  }
  return vol;
}

void write_volume(const Volume& vol, const std::filesystem::path& header_path,
                  const std::string& raw_name) {
  json header = {{"dims", vol.dims},
                 {"dtype", "u16le"},
                 {"spacing", vol.spacing},
                 {"raw", raw_name}};
  {
    std::ofstream out(header_path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + header_path.string());
    out << header.dump(2) << '\n';
  }
  auto raw_path = header_path.parent_path() / raw_name;
  std::ofstream out(raw_path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + raw_path.string());
  if constexpr (std::endian::native == std::endian::big) {
    std::vector<std::uint16_t> swapped(vol.voxels);
    for (auto& v : swapped) v = static_cast<std::uint16_t>((v >> 8) | (v << 8));
    out.write(reinterpret_cast<const char*>(swapped.data()),
              static_cast<std::streamsize>(swapped.size() * 2));
  } else {
    out.write(reinterpret_cast<const char*>(vol.voxels.data()),
              static_cast<std::streamsize>(vol.voxels.size() * 2));
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + raw_path.string());
}

// ---------------------------------------------------------------------------
// Annotations

AnnotationSet annotations_from_json(std::string_view text) {
  auto doc = parse_json(text, "annotation file");
  AnnotationSet set;
  // Contours are validated after parsing so schema errors and InvalidContour
  // stay distinguishable.
  std::vector<Contour> contours;
  with_schema("annotation file", [&] {
    set.set_volume_id(doc.at("volume_id").get<std::string>());
    for (const auto& s : doc.at("slices")) {
      const int index = s.at("index").get<int>();
      for (const auto& c : s.at("contours")) {
        Contour contour;
        contour.slice_index = index;
        contour.artery = parse_artery(c.at("artery").get<std::string>());
        contour.boundary = parse_boundary(c.at("boundary").get<std::string>());
        for (const auto& p : c.at("points")) {
          if (!p.is_array() || p.size() != 2) {
            throw Error(ErrorCode::ParseError, "point must be [x,y]");
          }
          contour.points.push_back({p[0].get<double>(), p[1].get<double>()});
        }
        contours.push_back(std::move(contour));
      }
    }
    return 0;
  });
  for (auto& c : contours) set.add(std::move(c));
  return set;
}

std::string annotations_to_json(const AnnotationSet& set) {
  json slices = json::array();
  int current = 0;
  json* slice = nullptr;
  for (const auto& c : set.entries()) {
    if (slice == nullptr || c.slice_index != current) {
      current = c.slice_index;
      slices.push_back({{"index", current}, {"contours", json::array()}});
      slice = &slices.back();
    }
    json pts = json::array();
    for (const auto& p : c.points) pts.push_back({p.x, p.y});
    (*slice)["contours"].push_back({{"artery", std::string(to_string(c.artery))},
                                    {"boundary", std::string(to_string(c.boundary))},
                                    {"points", std::move(pts)}});
  }
  json doc = {{"volume_id", set.volume_id()}, {"slices", std::move(slices)}};
  return doc.dump(1);
}

AnnotationSet read_annotations(const std::filesystem::path& path) {
  return annotations_from_json(slurp(path));
}

void write_annotations(const AnnotationSet& set, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << annotations_to_json(set) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

Patch normalize_patch(const Patch& patch) {
  if (patch.data.empty()) throw Error(ErrorCode::ShapeError, "empty patch");
  auto [lo, hi] = std::minmax_element(patch.data.begin(), patch.data.end());
  const double min = *lo;
  const double range = *hi - *lo;
  Patch out(patch.width, patch.height, 0.0);
  if (range <= 0.0) return out;
  for (std::size_t i = 0; i < patch.size(); ++i) out.data[i] = (patch.data[i] - min) / range;
  return out;
}

}  // namespace vwseg
