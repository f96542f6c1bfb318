#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "vwseg/adam.hpp"
#include "vwseg/annotation_io.hpp"
#include "vwseg/roi_prior.hpp"
#include "vwseg/tape.hpp"

namespace vwseg {

/// Output channels of the network.
enum Channel : int { kVessel = 0, kLumen = 1, kWall = 2 };
inline constexpr int kNumChannels = 3;

enum class ArteryGroup { Internal, External };

std::string_view to_string(ArteryGroup g);
ArteryGroup parse_group(std::string_view s);
ArteryGroup group_of(Artery a);
Artery artery_of(ArteryGroup g, Side s);

struct UNetConfig {
  int depth = 4;
  int base_channels = 64;
  int in_channels = 1;
  int out_channels = kNumChannels;
  int input_size = kRoiSize;

  /// Throws ConfigError on non-positive fields or an input size not divisible
  /// by 2^depth.
  void validate() const;
  int channels_at(int level) const { return base_channels << level; }
  bool operator==(const UNetConfig&) const = default;
};

struct TrainConfig {
  int epochs = 1500;
  double lr = 1e-4;
  int batch_size = 32;
  bool flip_augment = true;
  std::uint64_t seed = 0;
  /// Worker threads for per-sample forward/backward within a batch.
  int jobs = 1;

  void validate() const;
};

class UNet {
 public:
  /// Builds all layers with He-uniform kernels drawn from `seed`.
  UNet(const UNetConfig& cfg, std::uint64_t seed);

  const UNetConfig& config() const { return cfg_; }

  /// Layers in forward order: enc{l}.conv{0,1}, bottleneck.conv{0,1},
  /// dec{l}.up, dec{l}.conv{0,1} (l descending), head.
  std::vector<nn::LayerParams*> layers();
  std::vector<const nn::LayerParams*> layers() const;
  nn::LayerParams& layer(const std::string& name);

  std::size_t parameter_count() const;

  /// Records the network on `tape` and returns the sigmoid probabilities.
  /// `bottleneck`, when given, receives the deepest feature map shape.
  nn::Var forward(nn::Tape& tape, nn::Var x, nn::Shape* bottleneck = nullptr) const;

  /// Probabilities (1, out_channels, H, W) for one patch.
  nn::Tensor predict(const Patch& patch) const;

 private:
  UNetConfig cfg_;
  std::vector<nn::LayerParams> params_;
  // Positions inside params_ per stage.
  std::vector<std::array<int, 2>> enc_, dec_conv_;
  std::vector<int> dec_up_;
  std::array<int, 2> bottleneck_{};
  int head_ = 0;
};

nn::Tensor patch_to_tensor(const Patch& patch);

struct Sample {
  Patch patch;
  /// Vessel (outer) mask, lumen mask, wall ring; all patch-sized.
  std::array<Mask, kNumChannels> target;
};

nn::Tensor masks_to_tensor(const std::array<Mask, kNumChannels>& masks);

/// Raised when the loss turns non-finite; carries the epochs completed so far.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& message, std::vector<double> history)
      : Error(ErrorCode::DivergenceError, message), history_(std::move(history)) {}
  const std::vector<double>& history() const { return history_; }

 private:
  std::vector<double> history_;
};

/// Called after every epoch with (epoch index, mean loss).
using EpochCallback = std::function<void(int, double)>;

/// Mini-batch Adam over `data`; returns the per-epoch mean training loss
/// (measured on the forward passes that produced each update).
std::vector<double> train(UNet& net, const std::vector<Sample>& data, const TrainConfig& tc,
                          const EpochCallback& on_epoch = {});

/// Per channel: probabilities strictly above `threshold`, reduced to the
/// largest 8-connected component.
std::array<Mask, kNumChannels> predict_masks(const UNet& net, const Patch& patch,
                                             double threshold = 0.5);

struct ModelBundle {
  UNet net;
  ArteryGroup group = ArteryGroup::Internal;
  /// Location prior per covered side.
  std::map<Side, RoiBox> priors;
  std::vector<double> history;
  double threshold = 0.5;
};

/// Writes config.json, weights.bin, weights.json, priors.json and
/// history.json into `dir`.
void save_bundle(const ModelBundle& b, const std::filesystem::path& dir, bool with_adam = true);
ModelBundle load_bundle(const std::filesystem::path& dir);

/// Lumen and outer masks for one patch. Outer is the 8-connected component of
/// lumen ∪ wall that holds the lumen, so it always contains it. Nullopt when
/// the lumen channel is empty.
std::optional<std::pair<Mask, Mask>> lumen_and_outer(const std::array<Mask, kNumChannels>& masks);

/// Runs every bundle over every slice and side of `vol`. Stored priors are
/// clamped to the volume's own dimensions. Throws NoPrior when a bundle has
/// no side prior.
AnnotationSet infer_volume(std::span<const ModelBundle> models, const Volume& vol,
                           const std::string& volume_id, int jobs = 1);

}  // namespace vwseg
