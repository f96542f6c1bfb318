#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vwseg/grid.hpp"

namespace vwseg {

/// Artery labels in their canonical (serialization) order.
enum class Artery { ICAL, ICAR, ECAL, ECAR };
enum class Boundary { Lumen, Outer };

inline constexpr std::array<Artery, 4> kAllArteries{Artery::ICAL, Artery::ICAR, Artery::ECAL,
                                                    Artery::ECAR};

std::string_view to_string(Artery a);
std::string_view to_string(Boundary b);
Artery parse_artery(std::string_view s);
Boundary parse_boundary(std::string_view s);

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

struct Contour {
  std::vector<Point> points;
  Artery artery = Artery::ICAL;
  Boundary boundary = Boundary::Lumen;
  int slice_index = 0;

  bool operator==(const Contour&) const = default;
};

/// Contours of one volume, kept in canonical order: slice ascending, then
/// artery enum order, then Lumen before Outer. Contours sharing a key keep
/// their insertion order.
class AnnotationSet {
 public:
  AnnotationSet() = default;
  explicit AnnotationSet(std::string volume_id) : volume_id_(std::move(volume_id)) {}

  const std::string& volume_id() const { return volume_id_; }
  void set_volume_id(std::string id) { volume_id_ = std::move(id); }

  void add(Contour c);
  const std::vector<Contour>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

  /// First contour for the key, if any.
  const Contour* find(int slice, Artery artery, Boundary boundary) const;

  /// Contours grouped under (slice, artery).
  std::map<std::pair<int, Artery>, std::vector<const Contour*>> grouped() const;

  bool operator==(const AnnotationSet&) const = default;

 private:
  std::string volume_id_;
  std::vector<Contour> entries_;
};

struct Volume {
  std::array<int, 3> dims{1, 1, 1};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::vector<std::uint16_t> voxels;

  Volume() : voxels(1, 0) {}
  Volume(std::array<int, 3> d, std::array<double, 3> s);

  int width() const { return dims[0]; }
  int height() const { return dims[1]; }
  int depth() const { return dims[2]; }

  std::uint16_t& at(int x, int y, int z);
  std::uint16_t at(int x, int y, int z) const;

  Slice slice(int z) const;
  void set_slice(int z, const Slice& s);
};

/// Reads a JSON header {"dims","dtype":"u16le","spacing","raw"}; the raw path
/// is resolved relative to the header's directory.
Volume read_volume(const std::filesystem::path& header_path);

/// Writes the header plus a raw file named `raw_name` next to it.
void write_volume(const Volume& vol, const std::filesystem::path& header_path,
                  const std::string& raw_name = "volume.raw");

AnnotationSet read_annotations(const std::filesystem::path& path);
void write_annotations(const AnnotationSet& set, const std::filesystem::path& path);

AnnotationSet annotations_from_json(std::string_view text);
std::string annotations_to_json(const AnnotationSet& set);

/// Min-max rescale to [0,1]; a constant patch maps to zeros.
Patch normalize_patch(const Patch& patch);

template <class T>
Patch to_patch(const Grid<T>& g) {
  Patch p(g.width, g.height);
  for (std::size_t i = 0; i < g.size(); ++i) p.data[i] = static_cast<double>(g.data[i]);
  return p;
}

}  // namespace vwseg
