#include "vwseg/unet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "vwseg/contour_geometry.hpp"
#include "vwseg/parallel.hpp"
#include "vwseg/weights_io.hpp"

namespace vwseg {

using nlohmann::json;
using nn::LayerParams;
using nn::Shape;
using nn::Tape;
using nn::Tensor;
using nn::Var;

std::string_view to_string(ArteryGroup g) {
  return g == ArteryGroup::Internal ? "internal" : "external";
}

ArteryGroup parse_group(std::string_view s) {
  if (s == "internal") return ArteryGroup::Internal;
  if (s == "external") return ArteryGroup::External;
  throw Error(ErrorCode::ParseError, "unknown artery group '" + std::string(s) + "'");
}

ArteryGroup group_of(Artery a) {
  return (a == Artery::ICAL || a == Artery::ICAR) ? ArteryGroup::Internal : ArteryGroup::External;
}

Artery artery_of(ArteryGroup g, Side s) {
  if (g == ArteryGroup::Internal) return s == Side::Left ? Artery::ICAL : Artery::ICAR;
  return s == Side::Left ? Artery::ECAL : Artery::ECAR;
}

void UNetConfig::validate() const {
  if (depth < 1 || base_channels < 1 || in_channels < 1 || out_channels < 1 || input_size < 1) {
    throw Error(ErrorCode::ConfigError, "network config fields must be positive");
  }
  if (depth > 16 || (static_cast<long long>(base_channels) << depth) > (1LL << 20)) {
    throw Error(ErrorCode::ConfigError, "network too deep or too wide");
  }
  if (input_size % (1 << depth) != 0) {
    throw Error(ErrorCode::ConfigError, "input size " + std::to_string(input_size) +
                                            " is not divisible by 2^" + std::to_string(depth));
  }
}

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1 || jobs < 1) {
    throw Error(ErrorCode::ConfigError, "epochs, batch size and jobs must be positive");
  }
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw Error(ErrorCode::ConfigError, "learning rate must be finite and non-negative");
  }
}

UNet::UNet(const UNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const int d = cfg_.depth;
  auto add = [&](std::string name, int out, int in, int k) {
    params_.push_back(nn::make_params(std::move(name), out, in, k));
    return static_cast<int>(params_.size()) - 1;
  };
  for (int l = 0; l < d; ++l) {
    const int in = l == 0 ? cfg_.in_channels : cfg_.channels_at(l - 1);
    const std::string pre = "enc" + std::to_string(l);
    const int a = add(pre + ".conv0", cfg_.channels_at(l), in, 3);
    const int b = add(pre + ".conv1", cfg_.channels_at(l), cfg_.channels_at(l), 3);
    enc_.push_back({a, b});
  }
  bottleneck_[0] = add("bottleneck.conv0", cfg_.channels_at(d), cfg_.channels_at(d - 1), 3);
  bottleneck_[1] = add("bottleneck.conv1", cfg_.channels_at(d), cfg_.channels_at(d), 3);
  dec_up_.assign(d, 0);
  dec_conv_.assign(d, {0, 0});
  for (int l = d - 1; l >= 0; --l) {
    const std::string pre = "dec" + std::to_string(l);
    const int c = cfg_.channels_at(l);
    dec_up_[l] = add(pre + ".up", c, cfg_.channels_at(l + 1), 2);
    dec_conv_[l][0] = add(pre + ".conv0", c, 2 * c, 3);
    dec_conv_[l][1] = add(pre + ".conv1", c, c, 3);
  }
  head_ = add("head", cfg_.out_channels, cfg_.channels_at(0), 1);

  std::mt19937_64 rng(seed);
  for (auto& p : params_) {
    nn::he_uniform_init(p, p.in_channels() * p.kernel_size() * p.kernel_size(), rng);
  }
}

std::vector<LayerParams*> UNet::layers() {
  std::vector<LayerParams*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const LayerParams*> UNet::layers() const {
  std::vector<const LayerParams*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

LayerParams& UNet::layer(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw Error(ErrorCode::ConfigError, "no layer named " + name);
}

std::size_t UNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.parameter_count();
  return n;
}

Var UNet::forward(Tape& t, Var x, Shape* bottleneck) const {
  const Shape in = t.value(x).shape();
  if (in.c != cfg_.in_channels || in.h != cfg_.input_size || in.w != cfg_.input_size) {
    throw Error(ErrorCode::ShapeError, "network expects " + std::to_string(cfg_.in_channels) + "x" +
                                           std::to_string(cfg_.input_size) + "x" +
                                           std::to_string(cfg_.input_size) + " input, got " +
                                           nn::to_string(in));
  }
  auto block = [&](Var v, const std::array<int, 2>& ids) {
    v = t.relu(t.conv2d(v, params_[ids[0]]));
    return t.relu(t.conv2d(v, params_[ids[1]]));
  };
  std::vector<Var> skips;
  Var v = x;
  for (int l = 0; l < cfg_.depth; ++l) {
    v = block(v, enc_[l]);
    skips.push_back(v);
    v = t.max_pool2(v);
  }
  v = block(v, bottleneck_);
  if (bottleneck) *bottleneck = t.value(v).shape();
  for (int l = cfg_.depth - 1; l >= 0; --l) {
    Var up = t.transposed_conv2(v, params_[dec_up_[l]]);
    const Shape su = t.value(up).shape(), ss = t.value(skips[l]).shape();
    if (su.h != ss.h || su.w != ss.w) {
      throw Error(ErrorCode::ShapeError, "skip connection size mismatch at level " + std::to_string(l));
    }
    v = block(t.concat(skips[l], up), dec_conv_[l]);
  }
  return t.sigmoid(t.conv2d(v, params_[head_]));
}

Tensor patch_to_tensor(const Patch& patch) {
  return Tensor({1, 1, patch.height, patch.width}, patch.data);
}

Tensor masks_to_tensor(const std::array<Mask, kNumChannels>& masks) {
  const int w = masks[0].width, h = masks[0].height;
  Tensor t({1, kNumChannels, h, w});
  for (int c = 0; c < kNumChannels; ++c) {
    if (masks[c].width != w || masks[c].height != h) {
      throw Error(ErrorCode::ShapeError, "target masks differ in size");
    }
    double* dst = t.plane(0, c);
    for (std::size_t i = 0; i < masks[c].size(); ++i) dst[i] = masks[c].data[i] ? 1.0 : 0.0;
  }
  return t;
}

Tensor UNet::predict(const Patch& patch) const {
  Tape t(false);
  return t.value(forward(t, t.input(patch_to_tensor(patch))));
}

namespace {

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += src.data()[i];
}

void scale(Tensor& t, double s) {
  for (auto& v : t.values()) v *= s;
}

}  // namespace

std::vector<double> train(UNet& net, const std::vector<Sample>& data, const TrainConfig& tc,
                          const EpochCallback& on_epoch) {
  tc.validate();
  if (data.empty()) throw Error(ErrorCode::NoData, "training set is empty");
  const int size = net.config().input_size;
  for (const auto& s : data) {
    if (s.patch.width != size || s.patch.height != size) {
      throw Error(ErrorCode::ShapeError, "training patch does not match network input size");
    }
  }

  std::mt19937_64 rng(tc.seed);
  const nn::AdamOptions opt{tc.lr};
  const auto layers = net.layers();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> history;
  std::vector<double> losses(data.size());

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t stop = std::min(order.size(), start + tc.batch_size);
      const std::size_t b = stop - start;

      // Augmentation draws happen in batch order before any parallel work.
      std::vector<Tensor> inputs(b), targets(b);
      for (std::size_t i = 0; i < b; ++i) {
        const Sample& s = data[order[start + i]];
        if (tc.flip_augment) {
          auto f = augment_flip(s.patch, {s.target.begin(), s.target.end()}, rng);
          inputs[i] = patch_to_tensor(f.patch);
          targets[i] = masks_to_tensor({f.masks[0], f.masks[1], f.masks[2]});
        } else {
          inputs[i] = patch_to_tensor(s.patch);
          targets[i] = masks_to_tensor(s.target);
        }
      }

      std::vector<nn::Gradients> grads(b);
      std::vector<double> batch_loss(b);
      parallel_for(b, tc.jobs, [&](std::size_t i) {
        try {
          Tape t;
          Var loss = t.bce_loss(net.forward(t, t.input(inputs[i])), targets[i]);
          batch_loss[i] = t.scalar(loss);
          t.backward(loss, grads[i]);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::NonFinite) throw;
          batch_loss[i] = std::numeric_limits<double>::quiet_NaN();
        }
      });
      for (std::size_t i = 0; i < b; ++i) {
        if (!std::isfinite(batch_loss[i])) {
          throw DivergenceError("loss became non-finite in epoch " + std::to_string(epoch), history);
        }
        losses[order[start + i]] = batch_loss[i];
      }

      const double inv = 1.0 / static_cast<double>(b);
      for (LayerParams* p : layers) {
        nn::ParamGrads sum = nn::zero_grads_like(*p);
        for (std::size_t i = 0; i < b; ++i) {
          if (const nn::ParamGrads* g = grads[i].find(*p)) {
            add_into(sum.kernel, g->kernel);
            add_into(sum.bias, g->bias);
          }
        }
        scale(sum.kernel, inv);
        scale(sum.bias, inv);
        nn::adam_step(*p, sum, opt);
      }
    }
    double total = 0.0;
    for (double l : losses) total += l;
    const double mean = total / static_cast<double>(data.size());
    if (!std::isfinite(mean)) {
      throw DivergenceError("loss became non-finite in epoch " + std::to_string(epoch), history);
    }
    history.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return history;
}

std::array<Mask, kNumChannels> predict_masks(const UNet& net, const Patch& patch,
                                             double threshold) {
  if (net.config().out_channels != kNumChannels) {
    throw Error(ErrorCode::ConfigError, "mask prediction needs a three-channel network");
  }
  if (patch.width != net.config().input_size || patch.height != net.config().input_size) {
    throw Error(ErrorCode::ShapeError, "patch does not match network input size");
  }
  const Tensor prob = net.predict(patch);
  std::array<Mask, kNumChannels> out;
  for (int c = 0; c < kNumChannels; ++c) {
    Mask m(patch.width, patch.height);
    const double* src = prob.plane(0, c);
    for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = src[i] > threshold ? 1 : 0;
    out[c] = largest_component(m);
  }
  return out;
}

std::optional<std::pair<Mask, Mask>> lumen_and_outer(const std::array<Mask, kNumChannels>& masks) {
  const Mask& lumen = masks[kLumen];
  auto it = std::find(lumen.data.begin(), lumen.data.end(), std::uint8_t{1});
  if (it == lumen.data.end()) return std::nullopt;
  const int idx = static_cast<int>(it - lumen.data.begin());
  const Pixel seed{idx % lumen.width, idx / lumen.width};
  Mask outer = component_containing(mask_union(lumen, masks[kWall]), seed);
  return std::pair{lumen, std::move(outer)};
}

namespace {

json box_to_json(const RoiBox& b) {
  return {{"x0", b.x0}, {"y0", b.y0}, {"size", b.size}, {"flipped", b.flipped}};
}

RoiBox box_from_json(const json& j, Side side) {
  RoiBox b;
  b.x0 = j.at("x0").get<int>();
  b.y0 = j.at("y0").get<int>();
  b.size = j.at("size").get<int>();
  b.flipped = j.value("flipped", false);
  b.side = side;
  return b;
}

void write_json(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

}  // namespace

void save_bundle(const ModelBundle& b, const std::filesystem::path& dir, bool with_adam) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  const auto& c = b.net.config();
  write_json(dir / "config.json",
             {{"group", to_string(b.group)},
              {"threshold", b.threshold},
              {"unet",
               {{"depth", c.depth},
                {"base_channels", c.base_channels},
                {"in_channels", c.in_channels},
                {"out_channels", c.out_channels},
                {"input_size", c.input_size}}}});
  json priors = json::object();
  for (const auto& [side, box] : b.priors) priors[std::string(to_string(side))] = box_to_json(box);
  write_json(dir / "priors.json", priors);
  write_json(dir / "history.json", {{"loss", b.history}});
  const auto layers = b.net.layers();
  nn::save_weights(layers, dir / "weights.bin", dir / "weights.json", with_adam);
}

ModelBundle load_bundle(const std::filesystem::path& dir) {
  const json cfg = read_json(dir / "config.json");
  UNetConfig c;
  ArteryGroup group;
  double threshold;
  try {
    const auto& u = cfg.at("unet");
    c.depth = u.at("depth").get<int>();
    c.base_channels = u.at("base_channels").get<int>();
    c.in_channels = u.at("in_channels").get<int>();
    c.out_channels = u.at("out_channels").get<int>();
    c.input_size = u.at("input_size").get<int>();
    group = parse_group(cfg.at("group").get<std::string>());
    threshold = cfg.value("threshold", 0.5);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, "model config: " + std::string(e.what()));
  }
  ModelBundle b{UNet(c, 0), group, {}, {}, threshold};
  const auto layers = b.net.layers();
  nn::load_weights(layers, dir / "weights.bin", dir / "weights.json");

  const json priors = read_json(dir / "priors.json");
  try {
    for (const auto& [key, val] : priors.items()) {
      const Side s = parse_side(key);
      b.priors[s] = box_from_json(val, s);
    }
    if (std::filesystem::exists(dir / "history.json")) {
      b.history = read_json(dir / "history.json").at("loss").get<std::vector<double>>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, "model priors: " + std::string(e.what()));
  }
  return b;
}

AnnotationSet infer_volume(std::span<const ModelBundle> models, const Volume& vol,
                           const std::string& volume_id, int jobs) {
  const int w = vol.width(), h = vol.height();
  struct Job {
    const ModelBundle* model;
    Side side;
    RoiBox box;
  };
  std::vector<Job> jobs_per_slice;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const ModelBundle& m = models[i];
    for (std::size_t k = 0; k < i; ++k) {
      if (models[k].group == m.group) {
        throw Error(ErrorCode::ConfigError, "more than one model for " +
                                                std::string(to_string(m.group)) + " arteries");
      }
    }
    if (m.priors.empty()) {
      throw Error(ErrorCode::NoPrior, "model for " + std::string(to_string(m.group)) +
                                          " arteries has no location prior");
    }
    for (const auto& [side, prior] : m.priors) {
      if (prior.size != m.net.config().input_size) {
        throw Error(ErrorCode::ConfigError, "prior size differs from network input size");
      }
      jobs_per_slice.push_back({&m, side, clamp_to_image(prior, w, h)});
    }
  }

  std::vector<std::vector<Contour>> per_slice(vol.depth());
  parallel_for(per_slice.size(), jobs, [&](std::size_t zi) {
    const int z = static_cast<int>(zi);
    const Slice slice = vol.slice(z);
    for (const Job& j : jobs_per_slice) {
      const Patch patch = normalize_patch(to_patch(crop(slice, j.box)));
      auto masks = predict_masks(j.model->net, patch, j.model->threshold);
      auto lo = lumen_and_outer(masks);
      if (!lo) continue;
      const CanonicalContour lumen = mask_to_contour(lo->first);
      const CanonicalContour outer = mask_to_contour(lo->second);
      if (lumen.points.size() < 3 || outer.points.size() < 3) continue;
      const Artery a = artery_of(j.model->group, j.side);
      per_slice[zi].push_back(to_global(to_contour(lumen, a, Boundary::Lumen, z), j.box));
      per_slice[zi].push_back(to_global(to_contour(outer, a, Boundary::Outer, z), j.box));
    }
  });

  AnnotationSet out(volume_id);
  for (auto& contours : per_slice) {
    for (auto& c : contours) out.add(std::move(c));
  }
  return out;
}

}  // namespace vwseg
