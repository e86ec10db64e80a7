#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "dagankit/checkpoint.hpp"
#include "dagankit/config.hpp"
#include "dagankit/gradsuite.hpp"
#include "dagankit/image_io.hpp"

namespace fs = std::filesystem;
using namespace dagankit;

namespace {

struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

RunConfig resolve_config(const std::string& config_path,
                         const std::vector<std::string>& overrides) {
  RunConfig cfg;
  if (!config_path.empty()) cfg = load_config_file(config_path, cfg);
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    apply_config_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (const char* env = std::getenv("DAGANKIT_SEED")) {
    cfg.seed = std::strtoull(env, nullptr, 10);
  }
  cfg.validate();
  return cfg;
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw UsageError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw UsageError("cannot write '" + path.string() + "'");
  f << text;
}

// Inverse depth rendered as grayscale (near = bright).
Tensor depth_to_image(const Tensor& depth) {
  const int h = depth.extent(0), w = depth.extent(1);
  double lo = 1e300, hi = -1e300;
  for (int i = 0; i < depth.count(); ++i) {
    lo = std::min(lo, 1.0 / depth.at(i));
    hi = std::max(hi, 1.0 / depth.at(i));
  }
  std::vector<double> v(static_cast<size_t>(h) * w);
  for (int i = 0; i < depth.count(); ++i) {
    v[i] = hi > lo ? (1.0 / depth.at(i) - lo) / (hi - lo) : 0.5;
  }
  return Tensor({1, h, w}, std::move(v));
}

Tensor draw_keypoints(const Tensor& image, const Tensor& points) {
  std::vector<double> v = image.values();
  const int h = image.extent(1), w = image.extent(2);
  const int hw = h * w;
  for (int k = 0; k < points.extent(0); ++k) {
    const int px = static_cast<int>(std::lround((points.at(2 * k) + 1.0) * 0.5 * (w - 1)));
    const int py = static_cast<int>(std::lround((points.at(2 * k + 1) + 1.0) * 0.5 * (h - 1)));
    for (int d = -2; d <= 2; ++d) {
      const int x = std::clamp(px + d, 0, w - 1);
      const int y = std::clamp(py + d, 0, h - 1);
      v[py * w + x] = 1.0;
      v[hw + py * w + x] = 0.0;
      v[2 * hw + py * w + x] = 0.0;
      v[y * w + px] = 1.0;
      v[hw + y * w + px] = 0.0;
      v[2 * hw + y * w + px] = 0.0;
    }
  }
  return Tensor(image.shape(), std::move(v));
}

// Per-query attention maps, tiled into one grayscale grid image.
Tensor attention_grid(const Tensor& attention, int fh, int fw, int upscale) {
  const std::vector<std::pair<int, int>> queries = {
      {fh / 4, fw / 4}, {fh / 4, 3 * fw / 4}, {fh / 2, fw / 2},
      {3 * fh / 4, fw / 4}, {3 * fh / 4, 3 * fw / 4}};
  const int cell_h = fh * upscale, cell_w = fw * upscale;
  const int cols = static_cast<int>(queries.size());
  std::vector<double> grid(static_cast<size_t>(cell_h) * cell_w * cols, 0.0);
  for (int qi = 0; qi < cols; ++qi) {
    const int q = queries[qi].first * fw + queries[qi].second;
    Tensor row = take(attention, q * fh * fw, fh * fw);
    double hi = 0;
    for (int i = 0; i < row.count(); ++i) hi = std::max(hi, row.at(i));
    Tensor map = upsample_bilinear(reshape(scale(row, hi > 0 ? 1.0 / hi : 1.0), {1, fh, fw}),
                                   upscale);
    for (int y = 0; y < cell_h; ++y) {
      for (int x = 0; x < cell_w; ++x) {
        grid[static_cast<size_t>(y) * cell_w * cols + qi * cell_w + x] = map.at(y * cell_w + x);
      }
    }
  }
  return Tensor({1, cell_h, cell_w * cols}, std::move(grid));
}

struct LoadedModel {
  RunConfig cfg;
  DepthModel depth_model;
  GanModel gan_model;
  LoadedModel(const RunConfig& c, std::uint64_t seed)
      : cfg(c), depth_model(c.net_sizes(), seed), gan_model(c.net_sizes(), seed) {}
};

// A generation checkpoint holds the frozen depth net plus both players.
std::vector<const ParamStore*> gan_checkpoint_stores(const DepthNet& depth, GanModel& model) {
  std::vector<const ParamStore*> stores{&depth.params()};
  for (ParamStore* s : model.generator.param_stores()) stores.push_back(s);
  stores.push_back(&model.discriminator.params());
  stores.push_back(&model.extractor.params());
  return stores;
}

int cmd_train_depth(const RunConfig& cfg, const std::string& out,
                    const std::string& loss_log) {
  DepthModel model(cfg.net_sizes(), cfg.seed);
  DepthTrainConfig dc = cfg.depth_config();
  std::ostringstream curve;
  curve << "step,loss\n";
  DepthTrainResult result = train_depth(model, dc, [&](int step, double loss) {
    curve << step << "," << loss << "\n";
    if (step % 100 == 0) {
      std::cout << "step " << step << " loss " << loss << "\n" << std::flush;
    }
  });
  save_checkpoint(out, {&model.depth.params(), &model.pose.params()},
                  CheckpointMeta{cfg.seed, config_hash(cfg),
                                 static_cast<std::uint64_t>(cfg.depth_steps)});
  write_text(loss_log, curve.str());
  std::cout << "checkpoint written to " << out << "\n";
  return 0;
}

int cmd_train_gan(const RunConfig& cfg, const std::string& depth_ckpt, const std::string& out,
                  const std::string& loss_log) {
  if (!fs::exists(depth_ckpt)) {
    throw UsageError("depth checkpoint '" + depth_ckpt + "' not found; the frozen-depth "
                     "contract requires one (run train-depth first)");
  }
  DepthModel depth_model(cfg.net_sizes(), cfg.seed);
  apply_checkpoint(load_checkpoint(depth_ckpt),
                   {&depth_model.depth.params(), &depth_model.pose.params()});
  const std::uint64_t depth_sum_before = depth_model.depth.params().checksum();

  GanModel model(cfg.net_sizes(), cfg.seed);
  std::ostringstream log;
  log << "step,L_P,L_G,L_E,L_D,total\n";
  train_gan(model, depth_model.depth, cfg.gan_config(), [&](const GanStepRecord& r) {
    log << r.step << "," << r.perceptual << "," << r.gan << "," << r.equivariance << ","
        << r.distance << "," << r.total << "\n";
    if (r.step % 100 == 0) {
      std::cout << "step " << r.step << " L_P " << r.perceptual << " total " << r.total << "\n"
                << std::flush;
    }
  });

  if (depth_model.depth.params().checksum() != depth_sum_before) {
    throw NumericError("frozen-depth contract violated during generator training");
  }
  save_checkpoint(out, gan_checkpoint_stores(depth_model.depth, model),
                  CheckpointMeta{cfg.seed, config_hash(cfg),
                                 static_cast<std::uint64_t>(cfg.gan_steps)});
  write_text(loss_log, log.str());
  std::cout << "checkpoint written to " << out << "\n";
  return 0;
}

void load_gan_checkpoint(const std::string& path, DepthModel& depth_model, GanModel& model) {
  Checkpoint ckpt = load_checkpoint(path);
  std::vector<ParamStore*> stores{&depth_model.depth.params()};
  for (ParamStore* s : model.generator.param_stores()) stores.push_back(s);
  stores.push_back(&model.discriminator.params());
  stores.push_back(&model.extractor.params());
  apply_checkpoint(ckpt, stores);
}

void write_diagnostics(const fs::path& dir, const std::string& stem,
                       const GenerateDiagnostics& diag, const Tensor& source) {
  fs::create_directories(dir);
  const int h = source.extent(1);
  write_png((dir / (stem + "_depth_src.png")).string(),
            depth_to_image(reshape(diag.source_depth, {h, h})));
  write_png((dir / (stem + "_depth_drv.png")).string(),
            depth_to_image(reshape(diag.driving_depth, {h, h})));
  write_png((dir / (stem + "_kp_src.png")).string(),
            draw_keypoints(source, diag.source_kp.points));
  write_text(dir / (stem + "_kp_src.txt"), keypoints_to_text(diag.source_kp.points));
  write_text(dir / (stem + "_kp_drv.txt"), keypoints_to_text(diag.driving_kp.points));
  const int fh = diag.bundle.motion_mask.extent(1);
  write_png((dir / (stem + "_attention.png")).string(),
            attention_grid(diag.attention, fh, fh, 4));
  write_png((dir / (stem + "_occlusion.png")).string(),
            Tensor(diag.bundle.occlusion_map.shape(), diag.bundle.occlusion_map.values()));
}

int cmd_reenact(const RunConfig& cfg, const std::string& source_path, const std::string& driving,
                const std::string& ckpt, const std::string& out, bool diagnostics) {
  DepthModel depth_model(cfg.net_sizes(), cfg.seed);
  GanModel model(cfg.net_sizes(), cfg.seed);
  load_gan_checkpoint(ckpt, depth_model, model);

  Tensor source = read_png(source_path);
  if (source.extent(1) != cfg.resolution || source.extent(2) != cfg.resolution) {
    throw UsageError("source image must be " + std::to_string(cfg.resolution) + "x" +
                     std::to_string(cfg.resolution));
  }
  const auto frames = list_pngs(driving);
  if (frames.empty()) throw UsageError("no .png frames in '" + driving + "'");
  fs::create_directories(out);

  int failures = 0;
  Binder eval(nullptr);
  for (const fs::path& frame_path : frames) {
    try {
      Tensor driving_frame = read_png(frame_path.string());
      GenerateDiagnostics diag;
      Tensor generated = generate(model.generator, depth_model.depth, eval, source,
                                  driving_frame, diagnostics ? &diag : nullptr);
      const std::string stem = frame_path.stem().string();
      write_png((fs::path(out) / (stem + ".png")).string(), generated);
      if (diagnostics) {
        write_diagnostics(fs::path(out) / "diag", stem, diag, source);
      }
    } catch (const std::exception& e) {
      ++failures;
      std::cerr << "frame '" << frame_path.string() << "' failed: " << e.what() << "\n";
    }
  }
  std::cout << (frames.size() - failures) << "/" << frames.size() << " frames written to " << out
            << "\n";
  return 0;
}

int cmd_eval(const std::string& pred, const std::string& gt, const std::string& out) {
  const auto pred_files = list_pngs(pred);
  const auto gt_files = list_pngs(gt);
  if (pred_files.size() != gt_files.size()) {
    throw UsageError("frame count mismatch: " + std::to_string(pred_files.size()) + " vs " +
                     std::to_string(gt_files.size()));
  }
  if (pred_files.empty()) throw UsageError("no frames to evaluate");

  nlohmann::json frames = nlohmann::json::array();
  double mean_psnr = 0, mean_ssim = 0, mean_l1 = 0;
  for (size_t i = 0; i < pred_files.size(); ++i) {
    Tensor a = read_png(pred_files[i].string());
    Tensor b = read_png(gt_files[i].string());
    const double p = psnr(a, b);
    const double s = ssim_metric(a, b);
    const double l = l1(a, b);
    mean_psnr += p;
    mean_ssim += s;
    mean_l1 += l;
    frames.push_back({{"pred", pred_files[i].filename().string()},
                      {"gt", gt_files[i].filename().string()},
                      {"psnr", p},
                      {"ssim", s},
                      {"l1", l}});
  }
  nlohmann::json report = {
      {"frames", frames},
      {"mean", {{"psnr", mean_psnr / pred_files.size()},
                {"ssim", mean_ssim / pred_files.size()},
                {"l1", mean_l1 / pred_files.size()}}},
      {"count", pred_files.size()},
  };
  const std::string text = report.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text(out, text);
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  GradSuiteReport report = run_gradcheck_suite(seed);
  for (const GradSuiteEntry& e : report.entries) {
    std::cout << (e.pass ? "PASS" : "FAIL") << "  " << e.name << "  max rel err "
              << e.max_rel_err << " (tolerance " << e.tolerance << ")\n";
  }
  std::cout << (report.all_pass ? "all gradient checks passed" : "gradient checks FAILED")
            << "\n";
  return report.all_pass ? 0 : 2;
}

int cmd_gen_data(const RunConfig& cfg, const std::string& kind, const std::string& out, int count,
                 int frames) {
  fs::create_directories(out);
  std::ostringstream manifest;
  manifest << "# dagankit corpus manifest v1\n# kind " << kind << "\n";
  if (kind == "depth") {
    DepthSceneParams sp;
    sp.width = sp.height = cfg.resolution;
    sp.frames = frames;
    for (int s = 0; s < count; ++s) {
      DepthScene scene = gen_depth_scene(cfg.seed * 1000003ull + s, sp);
      const fs::path dir = fs::path(out) / ("scene_" + std::to_string(s));
      fs::create_directories(dir);
      manifest << "scene " << s << " seed " << cfg.seed * 1000003ull + s << "\n";
      manifest << "intrinsics " << scene.intrinsics.fx << " " << scene.intrinsics.fy << " "
               << scene.intrinsics.cx << " " << scene.intrinsics.cy << "\n";
      for (int f = 0; f < frames; ++f) {
        const fs::path file = dir / ("frame_" + std::to_string(f) + ".png");
        write_png(file.string(), scene.frames[f].image);
        manifest << "frame " << fs::relative(file, out).string() << "\n";
        if (f + 1 < frames) {
          const RelativePose& p = scene.pair_pose[f];
          manifest << "pose " << p.axis_angle.x << " " << p.axis_angle.y << " " << p.axis_angle.z
                   << " " << p.translation.x << " " << p.translation.y << " " << p.translation.z
                   << "\n";
        }
      }
    }
  } else if (kind == "puppet") {
    PuppetParams pp;
    pp.width = pp.height = cfg.resolution;
    for (int s = 0; s < count; ++s) {
      PuppetSequence seq = gen_puppet_sequence(cfg.seed * 7907ull + s, frames, pp);
      const fs::path dir = fs::path(out) / ("seq_" + std::to_string(s));
      fs::create_directories(dir);
      manifest << "sequence " << s << " seed " << cfg.seed * 7907ull + s << "\n";
      for (int f = 0; f < frames; ++f) {
        const fs::path file = dir / ("frame_" + std::to_string(f) + ".png");
        write_png(file.string(), seq.frames[f].image);
        manifest << "frame " << fs::relative(file, out).string() << "\n";
        manifest << "anchors";
        for (const auto& a : seq.frames[f].anchors) manifest << " " << a[0] << " " << a[1];
        manifest << "\n";
      }
    }
  } else {
    throw UsageError("--kind must be 'depth' or 'puppet'");
  }
  write_text(fs::path(out) / "manifest.txt", manifest.str());
  std::cout << "corpus written to " << out << "\n";
  return 0;
}

int cmd_visualize(const RunConfig& cfg, const std::string& image_path, const std::string& ckpt,
                  const std::string& out) {
  DepthModel depth_model(cfg.net_sizes(), cfg.seed);
  GanModel model(cfg.net_sizes(), cfg.seed);
  load_gan_checkpoint(ckpt, depth_model, model);

  Tensor image = read_png(image_path);
  fs::create_directories(out);
  Binder eval(nullptr);
  GenerateDiagnostics diag;
  generate(model.generator, depth_model.depth, eval, image, image, &diag);
  write_diagnostics(out, fs::path(image_path).stem().string(), diag, image);
  std::cout << "diagnostics written to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dagankit: self-supervised face depth, depth-guided motion transfer, and the "
               "training harness around them"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "key = value configuration file");
  app.add_option("--set", overrides, "override a config key (key=value, repeatable)");

  auto* train_depth_cmd = app.add_subcommand("train-depth", "fit the depth and pose networks");
  std::string depth_out = "depth.ckpt", depth_log;
  train_depth_cmd->add_option("--out", depth_out, "checkpoint path");
  train_depth_cmd->add_option("--loss-log", depth_log, "loss curve CSV (default <out>.loss.csv)");

  auto* train_gan_cmd = app.add_subcommand("train-gan", "train the generation framework");
  std::string gan_depth_ckpt, gan_out = "gan.ckpt", gan_log;
  train_gan_cmd->add_option("--depth-ckpt", gan_depth_ckpt, "frozen depth checkpoint")
      ->required();
  train_gan_cmd->add_option("--out", gan_out, "checkpoint path");
  train_gan_cmd->add_option("--loss-log", gan_log, "loss record CSV (default <out>.loss.csv)");

  auto* reenact_cmd = app.add_subcommand("reenact", "drive a source image with a frame folder");
  std::string source_path, driving_dir, reenact_ckpt, reenact_out = "reenacted";
  bool diagnostics = false;
  reenact_cmd->add_option("--source", source_path, "source image (png)")->required();
  reenact_cmd->add_option("--driving", driving_dir, "directory of driving frames")->required();
  reenact_cmd->add_option("--ckpt", reenact_ckpt, "generation checkpoint")->required();
  reenact_cmd->add_option("--out", reenact_out, "output directory");
  reenact_cmd->add_flag("--diagnostics", diagnostics, "also write depth/keypoint/attention maps");

  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM/L1 between two frame folders");
  std::string pred_dir, gt_dir, eval_out;
  eval_cmd->add_option("--pred", pred_dir, "predicted frames")->required();
  eval_cmd->add_option("--gt", gt_dir, "ground-truth frames")->required();
  eval_cmd->add_option("--out", eval_out, "write the JSON report here instead of stdout");

  auto* gradcheck_cmd =
      app.add_subcommand("gradcheck", "finite-difference audit of every primitive");

  auto* gen_data_cmd = app.add_subcommand("gen-data", "export a synthetic corpus");
  std::string gen_kind = "depth", gen_out = "corpus";
  int gen_count = 8, gen_frames = 4;
  gen_data_cmd->add_option("--kind", gen_kind, "depth | puppet");
  gen_data_cmd->add_option("--out", gen_out, "output directory");
  gen_data_cmd->add_option("--count", gen_count, "number of scenes/sequences");
  gen_data_cmd->add_option("--frames", gen_frames, "frames per scene/sequence");

  auto* visualize_cmd = app.add_subcommand("visualize", "depth, keypoints and attention maps");
  std::string vis_image, vis_ckpt, vis_out = "visualized";
  visualize_cmd->add_option("--image", vis_image, "input image (png)")->required();
  visualize_cmd->add_option("--ckpt", vis_ckpt, "generation checkpoint")->required();
  visualize_cmd->add_option("--out", vis_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg = resolve_config(config_path, overrides);
    if (train_depth_cmd->parsed()) {
      return cmd_train_depth(cfg, depth_out,
                             depth_log.empty() ? depth_out + ".loss.csv" : depth_log);
    }
    if (train_gan_cmd->parsed()) {
      return cmd_train_gan(cfg, gan_depth_ckpt, gan_out,
                           gan_log.empty() ? gan_out + ".loss.csv" : gan_log);
    }
    if (reenact_cmd->parsed()) {
      return cmd_reenact(cfg, source_path, driving_dir, reenact_ckpt, reenact_out, diagnostics);
    }
    if (eval_cmd->parsed()) return cmd_eval(pred_dir, gt_dir, eval_out);
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(cfg.seed);
    if (gen_data_cmd->parsed()) {
      return cmd_gen_data(cfg, gen_kind, gen_out, gen_count, gen_frames);
    }
    if (visualize_cmd->parsed()) return cmd_visualize(cfg, vis_image, vis_ckpt, vis_out);
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 1;
  } catch (const ImageIoError& e) {
    std::cerr << "image error: " << e.what() << "\n";
    return 1;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
