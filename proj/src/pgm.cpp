#include "vwseg/pgm.hpp"

#include <cctype>
#include <fstream>
#include <string>

namespace vwseg {

void write_pgm_mask(const Mask& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "P5\n" << m.width << ' ' << m.height << "\n255\n";
  std::string row(static_cast<std::size_t>(m.width), '\0');
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) row[x] = static_cast<char>(m.at(x, y) ? 255 : 0);
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string token(std::istream& in) {
  std::string t;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!t.empty()) break;
      continue;
    }
    t += static_cast<char>(c);
  }
  return t;
}

int header_int(std::istream& in, const char* what) {
  const std::string t = token(in);
  try {
    std::size_t used = 0;
    const int v = std::stoi(t, &used);
    if (used != t.size()) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ParseError, std::string("pgm: bad ") + what + " '" + t + "'");
  }
}

}  // namespace

Mask read_pgm_mask(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  if (token(in) != "P5") throw Error(ErrorCode::ParseError, "pgm: not a binary P5 file");
  const int w = header_int(in, "width");
  const int h = header_int(in, "height");
  const int maxval = header_int(in, "maxval");
  if (w < 1 || h < 1) throw Error(ErrorCode::ParseError, "pgm: non-positive dimensions");
  if (maxval < 1 || maxval > 255) throw Error(ErrorCode::ParseError, "pgm: only 8-bit maxval supported");
  Mask m(w, h);
  std::string buf(m.size(), '\0');
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw Error(ErrorCode::SizeMismatch, "pgm: pixel data shorter than header dimensions");
  }
  for (std::size_t i = 0; i < buf.size(); ++i) m.data[i] = buf[i] != 0 ? 1 : 0;
  return m;
}

}  // namespace vwseg
