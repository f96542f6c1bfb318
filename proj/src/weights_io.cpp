#include "vwseg/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

namespace vwseg::nn {

using nlohmann::json;

namespace {

json shape_json(const Shape& s) { return json::array({s.n, s.c, s.h, s.w}); }

void put(std::vector<char>& buf, const Tensor& t) {
  for (double v : t.values()) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    char raw[8];
    std::memcpy(raw, &bits, 8);
    buf.insert(buf.end(), raw, raw + 8);
  }
}

void take(const std::vector<char>& buf, std::size_t& offset, Tensor& t) {
  if (offset + t.size() * 8 > buf.size()) {
    throw Error(ErrorCode::SizeMismatch, "weight file shorter than manifest");
  }
  for (auto& v : t.values()) {
    std::uint64_t bits;
    std::memcpy(&bits, buf.data() + offset, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    v = std::bit_cast<double>(bits);
    offset += 8;
  }
}

Tensor or_zeros(const Tensor& t, const Shape& s) { return t.empty() ? Tensor(s) : t; }

}  // namespace

void save_weights(std::span<const LayerParams* const> layers, const std::filesystem::path& bin,
                  const std::filesystem::path& manifest, bool with_adam) {
  std::vector<char> buf;
  json entries = json::array();
  for (const LayerParams* p : layers) {
    json e = {{"name", p->name},
              {"kernel_shape", shape_json(p->kernel.shape())},
              {"bias_shape", shape_json(p->bias.shape())},
              {"offset", buf.size()}};
    put(buf, p->kernel);
    put(buf, p->bias);
    if (with_adam) {
      e["adam_step"] = p->adam.step;
      put(buf, or_zeros(p->adam.m_kernel, p->kernel.shape()));
      put(buf, or_zeros(p->adam.v_kernel, p->kernel.shape()));
      put(buf, or_zeros(p->adam.m_bias, p->bias.shape()));
      put(buf, or_zeros(p->adam.v_bias, p->bias.shape()));
    }
    entries.push_back(std::move(e));
  }
  json doc = {{"format", "f64le"}, {"adam", with_adam}, {"bytes", buf.size()}, {"layers", entries}};

  std::ofstream out(bin, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + bin.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  std::ofstream man(manifest);
  if (!man) throw Error(ErrorCode::IoError, "cannot write " + manifest.string());
  man << doc.dump(2) << '\n';
  if (!out || !man) throw Error(ErrorCode::IoError, "failed writing weights");
}

void load_weights(std::span<LayerParams* const> layers, const std::filesystem::path& bin,
                  const std::filesystem::path& manifest) {
  std::ifstream man(manifest);
  if (!man) throw Error(ErrorCode::IoError, "cannot open " + manifest.string());
  json doc;
  try {
    doc = json::parse(man);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("weight manifest: ") + e.what());
  }
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + bin.string());
  std::vector<char> buf{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};

  try {
    if (doc.at("format").get<std::string>() != "f64le") {
      throw Error(ErrorCode::ParseError, "unsupported weight format");
    }
    if (doc.at("bytes").get<std::size_t>() != buf.size()) {
      throw Error(ErrorCode::SizeMismatch, "weight file size differs from manifest");
    }
    const bool with_adam = doc.at("adam").get<bool>();
    const auto& entries = doc.at("layers");
    if (entries.size() != layers.size()) {
      throw Error(ErrorCode::ShapeError, "manifest lists " + std::to_string(entries.size()) +
                                             " layers, model has " + std::to_string(layers.size()));
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
      LayerParams& p = *layers[i];
      const auto& e = entries[i];
      if (e.at("name").get<std::string>() != p.name ||
          e.at("kernel_shape") != shape_json(p.kernel.shape()) ||
          e.at("bias_shape") != shape_json(p.bias.shape())) {
        throw Error(ErrorCode::ShapeError, "layer " + p.name + " does not match manifest");
      }
      std::size_t offset = e.at("offset").get<std::size_t>();
      take(buf, offset, p.kernel);
      take(buf, offset, p.bias);
      p.adam = AdamState{};
      if (with_adam) {
        p.adam.step = e.at("adam_step").get<long>();
        p.adam.m_kernel = Tensor(p.kernel.shape());
        p.adam.v_kernel = Tensor(p.kernel.shape());
        p.adam.m_bias = Tensor(p.bias.shape());
        p.adam.v_bias = Tensor(p.bias.shape());
        take(buf, offset, p.adam.m_kernel);
        take(buf, offset, p.adam.v_kernel);
        take(buf, offset, p.adam.m_bias);
        take(buf, offset, p.adam.v_bias);
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("weight manifest: ") + e.what());
  }
}

}  // namespace vwseg::nn
