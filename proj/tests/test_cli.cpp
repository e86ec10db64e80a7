#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "dagankit/checkpoint.hpp"
#include "dagankit/config.hpp"
#include "dagankit/image_io.hpp"

using namespace dagankit;
namespace fs = std::filesystem;

namespace {

const std::string cli = DAGANKIT_CLI_PATH;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::path("/tmp") / ("dagankit_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& sub = "") const { return (path / sub).string(); }
};

int run(const std::string& args) {
  const int rc = std::system((cli + " " + args + " >/dev/null 2>&1").c_str());
  return WEXITSTATUS(rc);
}

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("config file parsing, overrides and hashing") {
  TempDir dir("config");
  {
    std::ofstream f(dir.str("run.cfg"));
    f << "# experiment settings\n";
    f << "resolution = 64\n";
    f << "lambda_perceptual = 12.5\n";
    f << "seed = 99\n";
  }
  RunConfig cfg = load_config_file(dir.str("run.cfg"));
  CHECK(cfg.weights.perceptual == 12.5);
  CHECK(cfg.seed == 99);
  CHECK(cfg.keypoints == 15);  // defaults preserved

  apply_config_override(cfg, "gan_steps", "123");
  CHECK(cfg.gan_steps == 123);
  CHECK_THROWS_AS(apply_config_override(cfg, "nonsense", "1"), ConfigError);
  CHECK_THROWS_AS(apply_config_override(cfg, "depth_steps", "abc"), ConfigError);

  RunConfig same = load_config_file(dir.str("run.cfg"));
  apply_config_override(same, "gan_steps", "123");
  CHECK(config_hash(cfg) == config_hash(same));
  apply_config_override(same, "gan_steps", "124");
  CHECK(config_hash(cfg) != config_hash(same));

  RunConfig bad;
  bad.resolution = 40;  // not a multiple of 16
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("gen-data exports frames and a manifest") {
  TempDir dir("gendata");
  CHECK(run("gen-data --kind depth --count 2 --frames 3 --out " + dir.str("depth")) == 0);
  CHECK(fs::exists(dir.str("depth/manifest.txt")));
  CHECK(fs::exists(dir.str("depth/scene_0/frame_0.png")));
  Tensor img = read_png(dir.str("depth/scene_0/frame_0.png"));
  CHECK(img.shape() == Shape{3, 64, 64});

  CHECK(run("gen-data --kind puppet --count 1 --frames 2 --out " + dir.str("puppet")) == 0);
  std::ifstream mf(dir.str("puppet/manifest.txt"));
  std::string text((std::istreambuf_iterator<char>(mf)), std::istreambuf_iterator<char>());
  CHECK(text.find("anchors ") != std::string::npos);
  CHECK(text.find("frame ") != std::string::npos);

  CHECK(run("gen-data --kind nonsense --out " + dir.str("x")) == 1);
}

TEST_CASE("train-depth: determinism, env seed, zero steps") {
  TempDir dir("traindepth");
  const std::string small =
      " --set depth_steps=4 --set depth_scenes=2 --set depth_frames=2 --set seed=5";
  CHECK(run("train-depth" + small + " --out " + dir.str("a.ckpt")) == 0);
  CHECK(run("train-depth" + small + " --out " + dir.str("b.ckpt")) == 0);
  CHECK(slurp(dir.str("a.ckpt")) == slurp(dir.str("b.ckpt")));
  CHECK(fs::exists(dir.str("a.ckpt.loss.csv")));

  // DAGANKIT_SEED wins over the config seed.
  const int rc = std::system(("DAGANKIT_SEED=6 " + cli + " train-depth" + small + " --out " +
                              dir.str("c.ckpt") + " >/dev/null 2>&1")
                                 .c_str());
  CHECK(WEXITSTATUS(rc) == 0);
  CHECK(slurp(dir.str("c.ckpt")) != slurp(dir.str("a.ckpt")));
  Checkpoint c = load_checkpoint(dir.str("c.ckpt"));
  CHECK(c.meta.seed == 6);

  // steps = 0 stores the untouched initialization.
  CHECK(run("train-depth --set depth_steps=0 --set depth_scenes=1 --set depth_frames=2 "
            "--set seed=5 --out " +
            dir.str("init.ckpt")) == 0);
  RunConfig cfg;
  cfg.seed = 5;
  DepthModel fresh(cfg.net_sizes(), 5);
  DepthModel loaded(cfg.net_sizes(), 123);
  apply_checkpoint(load_checkpoint(dir.str("init.ckpt")),
                   {&loaded.depth.params(), &loaded.pose.params()});
  for (size_t i = 0; i < fresh.depth.params().entries().size(); ++i) {
    const auto& a = fresh.depth.params().entries()[i].value;
    const auto& b = loaded.depth.params().entries()[i].value;
    for (size_t k = 0; k < a.size(); ++k) {
      CHECK(b[k] == static_cast<double>(static_cast<float>(a[k])));
    }
  }
}

TEST_CASE("train-gan requires the depth checkpoint and freezes it") {
  TempDir dir("traingan");
  CHECK(run("train-gan --depth-ckpt " + dir.str("missing.ckpt") + " --out " + dir.str("g.ckpt")) ==
        1);

  const std::string small =
      " --set depth_steps=2 --set depth_scenes=1 --set depth_frames=2 --set seed=5";
  REQUIRE(run("train-depth" + small + " --out " + dir.str("d.ckpt")) == 0);
  const std::string gan_small =
      " --set gan_steps=2 --set gan_sequences=1 --set gan_frames=2 --set seed=5";
  CHECK(run("train-gan" + gan_small + " --depth-ckpt " + dir.str("d.ckpt") + " --out " +
            dir.str("g.ckpt")) == 0);
  CHECK(fs::exists(dir.str("g.ckpt.loss.csv")));

  // Depth parameters inside the generation checkpoint match the depth
  // checkpoint bit for bit (frozen contract).
  RunConfig cfg;
  DepthModel from_depth(cfg.net_sizes(), 1), from_gan(cfg.net_sizes(), 2);
  GanModel gan(cfg.net_sizes(), 3);
  apply_checkpoint(load_checkpoint(dir.str("d.ckpt")),
                   {&from_depth.depth.params(), &from_depth.pose.params()});
  Checkpoint g = load_checkpoint(dir.str("g.ckpt"));
  std::vector<ParamStore*> stores{&from_gan.depth.params()};
  for (ParamStore* s : gan.generator.param_stores()) stores.push_back(s);
  stores.push_back(&gan.discriminator.params());
  stores.push_back(&gan.extractor.params());
  apply_checkpoint(g, stores);
  CHECK(from_depth.depth.params().checksum() == from_gan.depth.params().checksum());

  // The loss log carries the documented header.
  std::ifstream log(dir.str("g.ckpt.loss.csv"));
  std::string header;
  std::getline(log, header);
  CHECK(header == "step,L_P,L_G,L_E,L_D,total");
}

TEST_CASE("reenact and eval round trip") {
  TempDir dir("reenact");
  const std::string small =
      " --set depth_steps=1 --set depth_scenes=1 --set depth_frames=2 --set seed=5";
  REQUIRE(run("train-depth" + small + " --out " + dir.str("d.ckpt")) == 0);
  REQUIRE(run("train-gan --set gan_steps=1 --set gan_sequences=1 --set gan_frames=2 "
              "--set seed=5 --depth-ckpt " +
              dir.str("d.ckpt") + " --out " + dir.str("g.ckpt")) == 0);
  REQUIRE(run("gen-data --kind puppet --count 1 --frames 3 --out " + dir.str("data")) == 0);

  const std::string source = dir.str("data/seq_0/frame_0.png");
  CHECK(run("reenact --source " + source + " --driving " + dir.str("data/seq_0") + " --ckpt " +
            dir.str("g.ckpt") + " --out " + dir.str("out") + " --diagnostics") == 0);
  // One output per driving frame.
  int count = 0;
  for (const auto& e : fs::directory_iterator(dir.str("out"))) {
    if (e.is_regular_file() && e.path().extension() == ".png") ++count;
  }
  CHECK(count == 3);
  CHECK(fs::exists(dir.str("out/diag")));

  // eval: pred == gt gives the capped PSNR and unit SSIM.
  CHECK(run("eval --pred " + dir.str("data/seq_0") + " --gt " + dir.str("data/seq_0") +
            " --out " + dir.str("report.json")) == 0);
  std::ifstream rf(dir.str("report.json"));
  std::string report((std::istreambuf_iterator<char>(rf)), std::istreambuf_iterator<char>());
  CHECK(report.find("\"psnr\": 99.0") != std::string::npos);
  CHECK(report.find("\"ssim\": 1.0") != std::string::npos);

  CHECK(run("eval --pred " + dir.str("out") + " --gt " + dir.str("data")) == 1);  // count mismatch

  // visualize writes depth/keypoint/attention artifacts.
  CHECK(run("visualize --image " + source + " --ckpt " + dir.str("g.ckpt") + " --out " +
            dir.str("vis")) == 0);
  CHECK(fs::exists(dir.str("vis/frame_0_depth_src.png")));
  CHECK(fs::exists(dir.str("vis/frame_0_kp_src.txt")));
  CHECK(fs::exists(dir.str("vis/frame_0_attention.png")));
}

TEST_CASE("png io round trip") {
  TempDir dir("png");
  Rng rng(3);
  std::vector<double> v(3 * 16 * 16);
  for (double& x : v) x = rng.uniform(0, 1);
  Tensor img({3, 16, 16}, v);
  write_png(dir.str("x.png"), img);
  Tensor back = read_png(dir.str("x.png"));
  REQUIRE(back.shape() == img.shape());
  for (int i = 0; i < img.count(); ++i) {
    CHECK(std::fabs(back.at(i) - img.at(i)) <= 0.5 / 255.0 + 1e-9);
  }
  CHECK_THROWS_AS(read_png(dir.str("missing.png")), ImageIoError);

  {
    std::ofstream f(dir.str("junk.png"), std::ios::binary);
    f << "not a png";
  }
  CHECK_THROWS_AS(read_png(dir.str("junk.png")), ImageIoError);
}
