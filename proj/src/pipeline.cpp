#include "vwseg/pipeline.hpp"

#include <algorithm>

#include "vwseg/contour_geometry.hpp"

namespace vwseg {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

int roi_size_for(int width, int height, int depth) {
  const int step = 1 << depth;
  const int limit = std::min({kRoiSize, width / 2, height});
  const int size = limit / step * step;
  if (size < step) {
    throw Error(ErrorCode::ImageTooSmall, "image " + std::to_string(width) + "x" +
                                              std::to_string(height) + " cannot hold a crop for depth " +
                                              std::to_string(depth));
  }
  return size;
}

std::map<Side, RoiFit> fit_priors(const AnnotationSet& ann, ArteryGroup group, int width,
                                  int height, int size) {
  std::map<Side, RoiFit> out;
  for (Side side : {Side::Left, Side::Right}) {
    std::vector<Contour> cs;
    for (const auto& c : ann.entries()) {
      if (group_of(c.artery) == group && side_of(c.artery) == side) cs.push_back(c);
    }
    if (!cs.empty()) out[side] = fit_roi(cs, side, width, height, size);
  }
  if (out.empty()) {
    throw Error(ErrorCode::NoAnnotations,
                "no " + std::string(to_string(group)) + " artery annotations to place a prior");
  }
  return out;
}

std::vector<Sample> make_samples(const Volume& vol, const AnnotationSet& ann, ArteryGroup group,
                                 const std::map<Side, RoiBox>& priors) {
  const int w = vol.width(), h = vol.height();
  std::vector<Sample> out;
  for (int z = 0; z < vol.depth(); ++z) {
    const Slice* slice = nullptr;
    Slice storage;
    for (Artery a : kAllArteries) {
      if (group_of(a) != group) continue;
      const Contour* lumen = ann.find(z, a, Boundary::Lumen);
      const Contour* outer = ann.find(z, a, Boundary::Outer);
      if (!lumen || !outer) continue;
      auto it = priors.find(side_of(a));
      if (it == priors.end()) {
        throw Error(ErrorCode::NoPrior, "no prior for the " + std::string(to_string(side_of(a))) + " side");
      }
      const RoiBox box = clamp_to_image(it->second, w, h);
      if (!slice) {
        storage = vol.slice(z);
        slice = &storage;
      }
      const Mask lm = crop(contour_to_mask(*lumen, w, h), box);
      const Mask om = crop(contour_to_mask(*outer, w, h), box);
      Sample s;
      s.patch = normalize_patch(to_patch(crop(*slice, box)));
      s.target[kWall] = ring_mask(om, lm);
      s.target[kVessel] = om;
      s.target[kLumen] = lm;
      out.push_back(std::move(s));
    }
  }
  return out;
}

ModelBundle train_group(const Volume& vol, const AnnotationSet& ann, ArteryGroup group,
                        const TrainPlan& plan, const EpochCallback& on_epoch) {
  const int size = plan.roi_size > 0 ? plan.roi_size
                                     : roi_size_for(vol.width(), vol.height(), plan.net.depth);
  UNetConfig cfg = plan.net;
  cfg.input_size = size;
  std::map<Side, RoiBox> priors;
  for (const auto& [side, fit] : fit_priors(ann, group, vol.width(), vol.height(), size)) {
    priors[side] = fit.box;
  }
  const std::vector<Sample> data = make_samples(vol, ann, group, priors);
  if (data.empty()) {
    throw Error(ErrorCode::NoData, "no slice has both boundaries for the " +
                                       std::string(to_string(group)) + " arteries");
  }
  const auto stream = static_cast<std::uint64_t>(group) * 2;
  ModelBundle b{UNet(cfg, derive_seed(plan.train.seed, stream)), group, priors, {}, 0.5};
  TrainConfig tc = plan.train;
  tc.seed = derive_seed(plan.train.seed, stream + 1);
  b.history = train(b.net, data, tc, on_epoch);
  return b;
}

}  // namespace vwseg
