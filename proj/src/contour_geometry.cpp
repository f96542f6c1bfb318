#include "vwseg/contour_geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <set>
#include <stdexcept>

namespace vwseg {

namespace {

// Moore neighbourhood in clockwise order on screen (y grows downward),
// starting at the west neighbour.
constexpr std::array<Pixel, 8> kRing{{
    {-1, 0}, {-1, -1}, {0, -1}, {1, -1}, {1, 0}, {1, 1}, {0, 1}, {-1, 1},
}};

int ring_index(Pixel center, Pixel neighbour) {
  const Pixel d{neighbour.x - center.x, neighbour.y - center.y};
  for (int i = 0; i < 8; ++i) {
    if (kRing[i] == d) return i;
  }
  throw std::logic_error("backtrack pixel is not a Moore neighbour");
}

bool is_set(const Mask& m, Pixel p) { return m.contains(p.x, p.y) && m.at(p.x, p.y) != 0; }

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return -floor_div(-a, b); }

// x coordinate of a scanline crossing as num/den with den > 0.
struct Crossing {
  std::int64_t num;
  std::int64_t den;
};

void check_dims(int width, int height) {
  if (width < 1 || height < 1) throw Error(ErrorCode::ShapeError, "mask dims must be positive");
}

}  // namespace

Contour snap_to_grid(const Contour& c) {
  Contour out = c;
  out.points.clear();
  for (const auto& p : c.points) {
    Point q{std::floor(p.x + 0.5), std::floor(p.y + 0.5)};
    if (out.points.empty() || !(out.points.back() == q)) out.points.push_back(q);
  }
  while (out.points.size() > 1 && out.points.back() == out.points.front()) out.points.pop_back();

  std::set<std::pair<double, double>> distinct;
  for (const auto& p : out.points) distinct.emplace(p.x, p.y);
  if (distinct.size() < 3) {
    throw Error(ErrorCode::DegenerateContour, "fewer than 3 distinct points after snapping");
  }
  return out;
}

std::vector<Pixel> to_pixels(const Contour& snapped) {
  std::vector<Pixel> px;
  px.reserve(snapped.points.size());
  for (const auto& p : snapped.points) {
    px.push_back({static_cast<int>(p.x), static_cast<int>(p.y)});
  }
  return px;
}

Mask polygon_to_mask(std::span<const Pixel> polygon, int width, int height) {
  check_dims(width, height);
  Mask mask(width, height, 0);
  if (polygon.empty()) return mask;

  const std::size_t n = polygon.size();
  int ymin = polygon[0].y, ymax = polygon[0].y;
  for (const auto& p : polygon) {
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }

  // Interior: crossings of the horizontal line through pixel centres, with
  // the half-open edge rule so every vertex is counted once.
  std::vector<Crossing> xs;
  for (int y = std::max(ymin, 0); y <= std::min(ymax, height - 1); ++y) {
    xs.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const Pixel a = polygon[i];
      const Pixel b = polygon[(i + 1) % n];
      if ((a.y > y) == (b.y > y)) continue;
      std::int64_t den = b.y - a.y;
      std::int64_t num = static_cast<std::int64_t>(a.x) * den +
                         static_cast<std::int64_t>(y - a.y) * (b.x - a.x);
      if (den < 0) {
        den = -den;
        num = -num;
      }
      xs.push_back({num, den});
    }
    std::sort(xs.begin(), xs.end(), [](const Crossing& l, const Crossing& r) {
      return l.num * r.den < r.num * l.den;
    });
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      const auto x0 = std::max<std::int64_t>(ceil_div(xs[k].num, xs[k].den), 0);
      const auto x1 = std::min<std::int64_t>(floor_div(xs[k + 1].num, xs[k + 1].den), width - 1);
      for (auto x = x0; x <= x1; ++x) mask.at(static_cast<int>(x), y) = 1;
    }
  }

  // Boundary: every lattice point on every edge.
  for (std::size_t i = 0; i < n; ++i) {
    const Pixel a = polygon[i];
    const Pixel b = polygon[(i + 1) % n];
    const int dx = b.x - a.x;
    const int dy = b.y - a.y;
    const int g = std::gcd(std::abs(dx), std::abs(dy));
    if (g == 0) {
      if (mask.contains(a.x, a.y)) mask.at(a.x, a.y) = 1;
      continue;
    }
    for (int k = 0; k <= g; ++k) {
      const int x = a.x + k * (dx / g);
      const int y = a.y + k * (dy / g);
      if (mask.contains(x, y)) mask.at(x, y) = 1;
    }
  }
  return mask;
}

Mask contour_to_mask(const Contour& c, int width, int height) {
  check_dims(width, height);
  const auto px = to_pixels(snap_to_grid(c));
  return polygon_to_mask(px, width, height);
}

Mask contour_to_mask(const CanonicalContour& c, int width, int height) {
  return polygon_to_mask(c.points, width, height);
}

std::vector<std::vector<Pixel>> components8(const Mask& m) {
  std::vector<std::vector<Pixel>> comps;
  std::vector<std::uint8_t> seen(m.size(), 0);
  std::deque<Pixel> queue;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * m.width + x;
      if (m.data[idx] == 0 || seen[idx]) continue;
      auto& comp = comps.emplace_back();
      seen[idx] = 1;
      queue.push_back({x, y});
      while (!queue.empty()) {
        const Pixel p = queue.front();
        queue.pop_front();
        comp.push_back(p);
        for (const auto& d : kRing) {
          const Pixel q{p.x + d.x, p.y + d.y};
          if (!is_set(m, q)) continue;
          const std::size_t qi = static_cast<std::size_t>(q.y) * m.width + q.x;
          if (seen[qi]) continue;
          seen[qi] = 1;
          queue.push_back(q);
        }
      }
    }
  }
  return comps;
}

Mask largest_component(const Mask& m) {
  Mask out(m.width, m.height, 0);
  const auto comps = components8(m);
  const std::vector<Pixel>* best = nullptr;
  for (const auto& c : comps) {
    if (best == nullptr || c.size() > best->size()) best = &c;
  }
  if (best != nullptr) {
    for (const auto& p : *best) out.at(p.x, p.y) = 1;
  }
  return out;
}

Mask component_containing(const Mask& m, Pixel seed) {
  Mask out(m.width, m.height, 0);
  if (!is_set(m, seed)) return out;
  std::deque<Pixel> queue{seed};
  out.at(seed.x, seed.y) = 1;
  while (!queue.empty()) {
    const Pixel p = queue.front();
    queue.pop_front();
    for (const auto& d : kRing) {
      const Pixel q{p.x + d.x, p.y + d.y};
      if (is_set(m, q) && out.at(q.x, q.y) == 0) {
        out.at(q.x, q.y) = 1;
        queue.push_back(q);
      }
    }
  }
  return out;
}

Mask fill_holes(const Mask& m) {
  // Background reachable from the border through 4-neighbours stays clear.
  Mask outside(m.width, m.height, 0);
  std::deque<Pixel> queue;
  auto seed = [&](int x, int y) {
    if (m.at(x, y) == 0 && outside.at(x, y) == 0) {
      outside.at(x, y) = 1;
      queue.push_back({x, y});
    }
  };
  for (int x = 0; x < m.width; ++x) {
    seed(x, 0);
    seed(x, m.height - 1);
  }
  for (int y = 0; y < m.height; ++y) {
    seed(0, y);
    seed(m.width - 1, y);
  }
  constexpr std::array<Pixel, 4> k4{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
  while (!queue.empty()) {
    const Pixel p = queue.front();
    queue.pop_front();
    for (const auto& d : k4) {
      const int x = p.x + d.x;
      const int y = p.y + d.y;
      if (m.contains(x, y)) seed(x, y);
    }
  }
  Mask out(m.width, m.height, 0);
  for (std::size_t i = 0; i < m.size(); ++i) out.data[i] = outside.data[i] ? 0 : 1;
  return out;
}

Mask mask_union(const Mask& a, const Mask& b) {
  if (a.width != b.width || a.height != b.height) {
    throw Error(ErrorCode::ShapeError, "mask dimensions differ");
  }
  Mask out(a.width, a.height, 0);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = (a.data[i] || b.data[i]) ? 1 : 0;
  return out;
}

CanonicalContour mask_to_contour(const Mask& m) {
  const Mask region = largest_component(m);
  const auto comps = components8(region);
  if (comps.empty()) throw Error(ErrorCode::EmptyMask, "mask has no set pixels");

  // Raster order makes the first discovered pixel the topmost, then leftmost.
  const Pixel start = comps.front().front();
  CanonicalContour out;
  out.points.push_back(start);

  // Finds the next boundary pixel clockwise around `p`, scanning from the
  // backtrack neighbour `b`; returns false for an isolated pixel.
  auto advance = [&](Pixel p, Pixel b, Pixel& next, Pixel& next_back) {
    const int base = ring_index(p, b);
    for (int k = 1; k <= 8; ++k) {
      const Pixel d = kRing[(base + k) % 8];
      const Pixel q{p.x + d.x, p.y + d.y};
      if (is_set(region, q)) {
        const Pixel pd = kRing[(base + k - 1) % 8];
        next = q;
        next_back = {p.x + pd.x, p.y + pd.y};
        return true;
      }
    }
    return false;
  };

  Pixel first{}, first_back{};
  if (!advance(start, {start.x - 1, start.y}, first, first_back)) return out;

  // Stop once the move start -> first repeats with the same backtrack
  // (Jacob's criterion applied to the first step rather than to the virtual
  // entry from the west, which thin regions never reproduce).
  const std::size_t limit = 8 * comps.front().size() + 16;
  Pixel p = first;
  Pixel b = first_back;
  out.points.push_back(p);
  while (true) {
    Pixel q{}, qb{};
    advance(p, b, q, qb);
    if (p == start && q == first && qb == first_back) break;
    out.points.push_back(q);
    p = q;
    b = qb;
    if (out.points.size() > limit) throw std::logic_error("boundary trace failed to close");
  }
  // The loop closes on the start pixel, already stored at the front.
  out.points.pop_back();
  return out;
}

Mask ring_mask(const Mask& outer, const Mask& lumen) {
  if (outer.width != lumen.width || outer.height != lumen.height) {
    throw Error(ErrorCode::ShapeError, "mask dimensions differ");
  }
  Mask out(outer.width, outer.height, 0);
  for (std::size_t i = 0; i < outer.size(); ++i) {
    if (lumen.data[i] && !outer.data[i]) {
      throw Error(ErrorCode::ContainmentViolation, "lumen pixel outside outer boundary");
    }
    out.data[i] = (outer.data[i] && !lumen.data[i]) ? 1 : 0;
  }
  return out;
}

Contour to_contour(const CanonicalContour& c, Artery artery, Boundary boundary, int slice) {
  Contour out;
  out.artery = artery;
  out.boundary = boundary;
  out.slice_index = slice;
  out.points.reserve(c.points.size());
  for (const auto& p : c.points) out.points.push_back({double(p.x), double(p.y)});
  return out;
}

}  // namespace vwseg
