// Command-line front end: phantom generation, training, inference,
// evaluation and the geometry helpers.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vwseg/contour_geometry.hpp"
#include "vwseg/metrics.hpp"
#include "vwseg/pgm.hpp"
#include "vwseg/phantom.hpp"
#include "vwseg/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vwseg;

namespace {

constexpr int kUsageExit = 2;
constexpr int kRuntimeExit = 1;

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + p.string());
}

// Expands `--config file.json` into flags that the command line does not
// already set, so explicit flags always win.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  auto it = std::find(args.begin(), args.end(), std::string("--config"));
  std::string path;
  if (it != args.end()) {
    if (it + 1 == args.end()) throw CLI::ArgumentMismatch("--config needs a file");
    path = *(it + 1);
    args.erase(it, it + 2);
  } else {
    for (auto a = args.begin(); a != args.end(); ++a) {
      if (a->rfind("--config=", 0) == 0) {
        path = a->substr(9);
        args.erase(a);
        break;
      }
    }
  }
  if (path.empty()) return args;

  const json cfg = read_json_file(path);
  if (!cfg.is_object()) throw Error(ErrorCode::ConfigError, "config file must hold a JSON object");
  auto present = [&](const std::string& flag) {
    for (const auto& a : args) {
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    }
    return false;
  };
  for (const auto& [key, val] : cfg.items()) {
    const std::string flag = "--" + key;
    if (present(flag)) continue;
    if (val.is_boolean()) {
      args.push_back(flag + "=" + (val.get<bool>() ? "true" : "false"));
    } else if (val.is_array()) {
      for (const auto& v : val) args.push_back(flag + "=" + (v.is_string() ? v.get<std::string>() : v.dump()));
    } else if (val.is_string()) {
      args.push_back(flag + "=" + val.get<std::string>());
    } else if (val.is_number()) {
      args.push_back(flag + "=" + val.dump());
    } else {
      throw Error(ErrorCode::ConfigError, "config key '" + key + "' has an unsupported value");
    }
  }
  return args;
}

std::string volume_id_for(const fs::path& header) {
  const json h = read_json_file(header);
  if (h.contains("volume_id") && h["volume_id"].is_string()) return h["volume_id"].get<std::string>();
  const fs::path dir = fs::absolute(header).parent_path();
  return dir.filename().string();
}

struct DataPaths {
  std::string dir;
  std::string volume;
  std::string annotations;

  fs::path volume_path() const { return volume.empty() ? fs::path(dir) / "volume.json" : fs::path(volume); }
  fs::path annotations_path() const {
    return annotations.empty() ? fs::path(dir) / "annotations.json" : fs::path(annotations);
  }
  void require() const {
    if (dir.empty() && (volume.empty() || annotations.empty())) {
      throw CLI::ValidationError("--data", "give --data or both --volume and --annotations");
    }
  }
};

std::pair<int, int> dims_from(const std::string& volume, int width, int height) {
  if (!volume.empty()) {
    const json h = read_json_file(volume);
    try {
      const auto d = h.at("dims").get<std::vector<int>>();
      if (d.size() != 3) throw Error(ErrorCode::ParseError, "dims must have three entries");
      return {d[0], d[1]};
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, volume + ": " + e.what());
    }
  }
  if (width < 1 || height < 1) {
    throw CLI::ValidationError("--width/--height", "give --volume or positive --width and --height");
  }
  return {width, height};
}

std::vector<ArteryGroup> parse_groups(const std::vector<std::string>& names) {
  std::vector<ArteryGroup> out;
  for (const auto& n : names) {
    const ArteryGroup g = parse_group(n);
    if (std::find(out.begin(), out.end(), g) == out.end()) out.push_back(g);
  }
  return out;
}

std::string error_line(const std::string& code, const std::string& message) {
  return json{{"error", code}, {"message", message}}.dump();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Carotid vessel wall segmentation pipeline"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");
  std::uint64_t seed = 0;
  int jobs = 1;
  auto add_common = [&](CLI::App* c) {
    c->add_option("--seed", seed, "Random seed")->envname("VESSEL_SEED");
    c->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    c->add_option("--config", "JSON file of flag values; explicit flags take precedence");
  };

  // phantom
  PhantomSpec ps;
  std::string phantom_out, phantom_id = "phantom";
  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic volume with ground truth");
  phantom->add_option("--slices", ps.n_slices, "Number of slices")->check(CLI::PositiveNumber);
  phantom->add_option("--size", ps.image_size, "Image width and height in pixels");
  phantom->add_option("--jitter", ps.jitter, "Vessel centre jitter (px)");
  phantom->add_option("--lumen-min", ps.lumen_radius_min, "Smallest lumen radius (px)");
  phantom->add_option("--lumen-max", ps.lumen_radius_max, "Largest lumen radius (px)");
  phantom->add_option("--wall-min", ps.wall_min, "Thinnest wall (px)");
  phantom->add_option("--wall-max", ps.wall_max, "Thickest wall (px)");
  phantom->add_option("--noise", ps.noise, "Gaussian noise standard deviation");
  phantom->add_option("--id", phantom_id, "Volume id written to the annotations");
  phantom->add_option("--out", phantom_out, "Output directory")->required();
  add_common(phantom);

  // train
  DataPaths train_data;
  TrainPlan plan;
  plan.net.depth = 4;
  plan.net.base_channels = 64;
  std::string model_out;
  std::vector<std::string> train_groups{"internal", "external"};
  bool no_flip = false;
  int log_every = 10;
  auto* trainc = app.add_subcommand("train", "Train one model per artery group");
  trainc->add_option("--data", train_data.dir, "Directory with volume.json and annotations.json");
  trainc->add_option("--volume", train_data.volume, "Volume header (overrides --data)");
  trainc->add_option("--annotations", train_data.annotations, "Annotation file (overrides --data)");
  trainc->add_option("--depth", plan.net.depth, "Down/up-sampling steps")->check(CLI::PositiveNumber);
  trainc->add_option("--base", plan.net.base_channels, "Channels at the first level")
      ->check(CLI::PositiveNumber);
  trainc->add_option("--epochs", plan.train.epochs, "Training epochs")->check(CLI::PositiveNumber);
  trainc->add_option("--lr", plan.train.lr, "Adam learning rate")->check(CLI::NonNegativeNumber);
  trainc->add_option("--batch", plan.train.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
  trainc->add_flag("--no-flip", no_flip, "Disable random left/right flips");
  trainc->add_option("--roi-size", plan.roi_size, "Crop size (0 = automatic)")->check(CLI::NonNegativeNumber);
  trainc->add_option("--groups", train_groups, "Artery groups to train (internal, external)")
      ->delimiter(',');
  trainc->add_option("--log-every", log_every, "Print the loss every N epochs (0 = never)");
  trainc->add_option("--out", model_out, "Model directory")->required();
  add_common(trainc);

  // infer
  std::string model_dir, infer_volume_path, infer_out, infer_id;
  auto* inferc = app.add_subcommand("infer", "Predict lumen and outer contours for a volume");
  inferc->add_option("--model", model_dir, "Model directory written by train")->required();
  inferc->add_option("--volume", infer_volume_path, "Volume header")->required();
  inferc->add_option("--volume-id", infer_id, "Id for the output (default: from the header)");
  inferc->add_option("--out", infer_out, "Output annotation file")->required();
  add_common(inferc);

  // evaluate
  std::string eval_pred, eval_gt, eval_volume, eval_json, eval_csv;
  int eval_w = 0, eval_h = 0;
  ScoreWeights weights;
  auto* evalc = app.add_subcommand("evaluate", "Score predictions against ground truth");
  evalc->add_option("--pred", eval_pred, "Predicted annotations")->required();
  evalc->add_option("--gt", eval_gt, "Ground-truth annotations")->required();
  evalc->add_option("--volume", eval_volume, "Volume header supplying the image size");
  evalc->add_option("--width", eval_w, "Image width when no volume is given");
  evalc->add_option("--height", eval_h, "Image height when no volume is given");
  evalc->add_option("--weight-lumen", weights.dice_lumen, "Score weight of lumen Dice");
  evalc->add_option("--weight-wall", weights.dice_wall, "Score weight of wall Dice");
  evalc->add_option("--out", eval_json, "JSON report (default: stdout)");
  evalc->add_option("--csv", eval_csv, "CSV report");
  add_common(evalc);

  // rasterize
  std::string ras_in, ras_out, ras_volume, ras_artery, ras_boundary;
  int ras_slice = 0, ras_w = 0, ras_h = 0;
  auto* rasc = app.add_subcommand("rasterize", "Write one contour as a PGM mask");
  rasc->add_option("--in", ras_in, "Annotation file")->required();
  rasc->add_option("--slice", ras_slice, "Slice index")->required();
  rasc->add_option("--artery", ras_artery, "ICAL, ICAR, ECAL or ECAR")->required();
  rasc->add_option("--boundary", ras_boundary, "lumen or outer")->required();
  rasc->add_option("--volume", ras_volume, "Volume header supplying the image size");
  rasc->add_option("--width", ras_w, "Image width when no volume is given");
  rasc->add_option("--height", ras_h, "Image height when no volume is given");
  rasc->add_option("--out", ras_out, "Output PGM file")->required();
  add_common(rasc);

  // trace
  std::string tr_in, tr_out, tr_artery = "ICAL", tr_boundary = "lumen", tr_id = "traced";
  int tr_slice = 0;
  auto* trc = app.add_subcommand("trace", "Trace a PGM mask into a contour");
  trc->add_option("--in", tr_in, "Input PGM mask")->required();
  trc->add_option("--slice", tr_slice, "Slice index for the output contour");
  trc->add_option("--artery", tr_artery, "Artery label for the output contour");
  trc->add_option("--boundary", tr_boundary, "Boundary label for the output contour");
  trc->add_option("--volume-id", tr_id, "Volume id for the output file");
  trc->add_option("--out", tr_out, "Output annotation file")->required();
  add_common(trc);

  // roi-fit
  std::string roi_ann, roi_volume, roi_side, roi_group;
  int roi_w = 0, roi_h = 0, roi_size = kRoiSize;
  auto* roic = app.add_subcommand("roi-fit", "Fit the location prior box for one side");
  roic->add_option("--annotations", roi_ann, "Annotation file")->required();
  roic->add_option("--side", roi_side, "left or right")->required();
  roic->add_option("--group", roi_group, "Restrict to internal or external arteries");
  roic->add_option("--volume", roi_volume, "Volume header supplying the image size");
  roic->add_option("--width", roi_w, "Image width when no volume is given");
  roic->add_option("--height", roi_h, "Image height when no volume is given");
  roic->add_option("--size", roi_size, "Box size")->check(CLI::PositiveNumber);
  add_common(roic);

  std::vector<std::string> args;
  try {
    std::vector<std::string> raw(argv + 1, argv + argc);
    args = expand_config(raw);
  } catch (const CLI::Error& e) {
    std::cerr << error_line("UsageError", e.what()) << '\n';
    return kUsageExit;
  } catch (const Error& e) {
    std::cerr << error_line(std::string(to_string(e.code())), e.what()) << '\n';
    return kUsageExit;
  }

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << error_line("UsageError", e.what()) << '\n';
    std::cerr << "run with --help for usage\n";
    return kUsageExit;
  }

  try {
    if (phantom->parsed()) {
      ps.seed = seed;
      const Phantom ph = phantom_generate(ps, phantom_id);
      const fs::path dir(phantom_out);
      fs::create_directories(dir);
      write_volume(ph.volume, dir / "volume.json");
      json header = read_json_file(dir / "volume.json");
      header["volume_id"] = phantom_id;
      write_text(dir / "volume.json", header.dump(2) + "\n");
      write_annotations(ph.annotations, dir / "annotations.json");
      std::cout << json{{"volume", (dir / "volume.json").string()},
                        {"annotations", (dir / "annotations.json").string()},
                        {"contours", ph.annotations.size()}}
                       .dump()
                << '\n';
    } else if (trainc->parsed()) {
      train_data.require();
      plan.train.seed = seed;
      plan.train.jobs = jobs;
      plan.train.flip_augment = !no_flip;
      const Volume vol = read_volume(train_data.volume_path());
      const AnnotationSet ann = read_annotations(train_data.annotations_path());
      for (ArteryGroup g : parse_groups(train_groups)) {
        const std::string name(to_string(g));
        auto log = [&](int epoch, double loss) {
          if (log_every > 0 && (epoch % log_every == 0 || epoch + 1 == plan.train.epochs)) {
            std::cerr << name << " epoch " << epoch + 1 << "/" << plan.train.epochs << " loss "
                      << loss << '\n';
          }
        };
        const ModelBundle b = train_group(vol, ann, g, plan, log);
        save_bundle(b, fs::path(model_out) / name);
        std::cout << json{{"group", name},
                          {"final_loss", b.history.back()},
                          {"input_size", b.net.config().input_size},
                          {"parameters", b.net.parameter_count()}}
                         .dump()
                  << '\n';
      }
    } else if (inferc->parsed()) {
      std::vector<ModelBundle> models;
      for (ArteryGroup g : {ArteryGroup::Internal, ArteryGroup::External}) {
        const fs::path dir = fs::path(model_dir) / std::string(to_string(g));
        if (fs::exists(dir / "config.json")) models.push_back(load_bundle(dir));
      }
      if (models.empty()) {
        throw Error(ErrorCode::IoError, "no model bundles under " + model_dir);
      }
      const Volume vol = read_volume(infer_volume_path);
      const std::string id = infer_id.empty() ? volume_id_for(infer_volume_path) : infer_id;
      const AnnotationSet out = infer_volume(models, vol, id, jobs);
      write_annotations(out, infer_out);
      std::cout << json{{"out", infer_out}, {"contours", out.size()},
                        {"dims", {vol.width(), vol.height(), vol.depth()}}}
                       .dump()
                << '\n';
    } else if (evalc->parsed()) {
      const auto [w, h] = dims_from(eval_volume, eval_w, eval_h);
      const MetricsReport r =
          evaluate(read_annotations(eval_pred), read_annotations(eval_gt), w, h, weights, jobs);
      const std::string text = report_to_json(r);
      if (eval_json.empty()) std::cout << text;
      else write_text(eval_json, text);
      if (!eval_csv.empty()) write_text(eval_csv, report_to_csv(r));
    } else if (rasc->parsed()) {
      const auto [w, h] = dims_from(ras_volume, ras_w, ras_h);
      const AnnotationSet ann = read_annotations(ras_in);
      const Contour* c = ann.find(ras_slice, parse_artery(ras_artery), parse_boundary(ras_boundary));
      if (!c) {
        throw Error(ErrorCode::NoAnnotations, "no " + ras_artery + " " + ras_boundary +
                                                   " contour on slice " + std::to_string(ras_slice));
      }
      const Mask m = contour_to_mask(*c, w, h);
      write_pgm_mask(m, ras_out);
      std::cout << json{{"out", ras_out}, {"pixels", count_set(m)}}.dump() << '\n';
    } else if (trc->parsed()) {
      const Mask m = read_pgm_mask(tr_in);
      const CanonicalContour c = mask_to_contour(m);
      AnnotationSet out(tr_id);
      out.add(to_contour(c, parse_artery(tr_artery), parse_boundary(tr_boundary), tr_slice));
      write_annotations(out, tr_out);
      std::cout << json{{"out", tr_out}, {"points", c.points.size()}}.dump() << '\n';
    } else if (roic->parsed()) {
      const auto [w, h] = dims_from(roi_volume, roi_w, roi_h);
      const Side side = parse_side(roi_side);
      const AnnotationSet ann = read_annotations(roi_ann);
      std::optional<ArteryGroup> group;
      if (!roi_group.empty()) group = parse_group(roi_group);
      std::vector<Contour> cs;
      for (const auto& c : ann.entries()) {
        if (side_of(c.artery) == side && (!group || group_of(c.artery) == *group)) cs.push_back(c);
      }
      const RoiFit fit = fit_roi(cs, side, w, h, roi_size);
      std::cout << json{{"side", to_string(side)},
                        {"x0", fit.box.x0},
                        {"y0", fit.box.y0},
                        {"size", fit.box.size},
                        {"span_exceeded", fit.span_exceeded}}
                       .dump()
                << '\n';
    }
  } catch (const CLI::Error& e) {
    std::cerr << error_line("UsageError", e.what()) << '\n';
    return kUsageExit;
  } catch (const Error& e) {
    std::cerr << error_line(std::string(to_string(e.code())), e.what()) << '\n';
    return kRuntimeExit;
  } catch (const std::exception& e) {
    std::cerr << error_line("InternalError", e.what()) << '\n';
    return kRuntimeExit;
  }
  return 0;
}
