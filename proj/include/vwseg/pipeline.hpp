#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "vwseg/unet.hpp"

namespace vwseg {

/// Derives an independent seed for a numbered stream (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Crop size used for training: kRoiSize when the image holds two boxes side
/// by side, otherwise the largest multiple of 2^depth that fits in half the
/// width and the full height. Throws ImageTooSmall when none fits.
int roi_size_for(int width, int height, int depth);

/// Location prior per side from every contour of the group's arteries.
/// Sides without annotations get no entry; throws NoAnnotations when neither
/// side has any.
std::map<Side, RoiFit> fit_priors(const AnnotationSet& ann, ArteryGroup group, int width,
                                  int height, int size);

/// One sample per (slice, artery of the group) carrying both a lumen and an
/// outer contour: the normalized crop plus vessel, lumen and wall targets.
std::vector<Sample> make_samples(const Volume& vol, const AnnotationSet& ann, ArteryGroup group,
                                 const std::map<Side, RoiBox>& priors);

struct TrainPlan {
  UNetConfig net;
  TrainConfig train;
  /// 0 picks roi_size_for(...).
  int roi_size = 0;
};

/// Fits priors, assembles samples, builds the network (seed stream derived
/// from train.seed and the group) and trains it.
ModelBundle train_group(const Volume& vol, const AnnotationSet& ann, ArteryGroup group,
                        const TrainPlan& plan, const EpochCallback& on_epoch = {});

}  // namespace vwseg
