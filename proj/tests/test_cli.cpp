#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "txsp/cli.hpp"
#include "txsp/config.hpp"
#include "txsp/image_io.hpp"
#include "txsp/metrics.hpp"
#include "txsp/reference.hpp"

using namespace txsp;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "txsp");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Exit status of the installed binary, run through the shell.
int binary(const std::string& args) {
  const int status = std::system((std::string(TXSP_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("txsp_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Tensorf random_image(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Tensorf::uniform({1, 3, h, w}, rng, 0.0f, 1.0f);
}

GeneratorConfig tiny() {
  GeneratorConfig g;
  g.width_multiplier = 1.0 / 16;
  return g;
}

// Shared fixture: tiny weights and a few images.
struct Files {
  fs::path dir = scratch_dir("files");
  fs::path weights = dir / "g.txw";
  fs::path img32 = dir / "a32.png";
  fs::path img64 = dir / "a64.png";
  fs::path odd = dir / "odd.png";
  Files() {
    save_generator(weights, init_generator<float>(tiny(), 1), tiny());
    save_png(img32, random_image(32, 32, 1));
    save_png(img64, random_image(64, 64, 2));
    save_png(odd, random_image(40, 40, 3));
  }
};

const Files& files() {
  static const Files f;
  return f;
}

Shape png_shape(const fs::path& p) { return load_image(p).shape(); }

}  // namespace

TEST_CASE("nearest achievable noise extents") {
  CHECK(nearest_noise_extents(128, 512) == std::vector<int>{512, 512});
  CHECK(nearest_noise_extents(128, 500) == std::vector<int>{496, 512});
  CHECK(nearest_noise_extents(128, 2048) == std::vector<int>{2048, 2048});
  CHECK(nearest_noise_extents(64, 100) == std::vector<int>{96, 112});
  CHECK(nearest_noise_extents(64, 10) == std::vector<int>{64, 64});
  // Every returned extent satisfies T = 16 n5 + H - 16 with n5 >= 1.
  for (int h : {32, 64, 96, 128})
    for (int t = 1; t < 700; t += 7)
      for (int e : nearest_noise_extents(h, t)) {
        CHECK((e - h + 16) % 16 == 0);
        CHECK((e - h + 16) / 16 >= 1);
      }
}

TEST_CASE("usage errors and help") {
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({"synthesize", "--input", "x.png"}).code == kExitUsage);
  CHECK(binary("") == 2);
  CHECK(binary("--help") == 0);
}

TEST_CASE("synthesize in self-similarity mode") {
  const Files& f = files();
  const fs::path out = f.dir / "out2.png";
  auto r = cli({"synthesize", "--input", f.img32, "--weights", f.weights, "--out", out});
  REQUIRE(r.code == kExitOk);
  CHECK(png_shape(out) == Shape{1, 3, 64, 64});
  // The PNG holds the quantized generator output.
  auto [w, g] = load_generator(f.weights);
  CHECK(load_image(out) == quantized(synthesize(w, g, load_image(f.img32), 2)));

  r = cli({"synthesize", "--input", f.img32, "--weights", f.weights, "--out", f.dir / "out4.png", "--scale", "4"});
  REQUIRE(r.code == kExitOk);
  CHECK(png_shape(f.dir / "out4.png") == Shape{1, 3, 128, 128});
  CHECK(binary("synthesize --input " + f.img64.string() + " --weights " + f.weights.string() + " --out " +
               (f.dir / "bin.png").string()) == 0);
  CHECK(png_shape(f.dir / "bin.png") == Shape{1, 3, 128, 128});
}

TEST_CASE("synthesize errors map to exit codes") {
  const Files& f = files();
  const fs::path out = f.dir / "e.png";
  auto r = cli({"synthesize", "--input", f.odd, "--weights", f.weights, "--out", out});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("32") != std::string::npos);
  CHECK(cli({"synthesize", "--input", f.img32, "--weights", f.weights, "--out", out, "--scale", "3"}).code ==
        kExitUsage);
  CHECK(cli({"synthesize", "--input", f.img32, "--weights", f.dir / "none.txw", "--out", out}).code ==
        kExitMissing);
  CHECK(cli({"synthesize", "--input", f.dir / "none.png", "--weights", f.weights, "--out", out}).code ==
        kExitMissing);
  std::ofstream(f.dir / "junk.txw") << "junk";
  CHECK(cli({"synthesize", "--input", f.img32, "--weights", f.dir / "junk.txw", "--out", out}).code ==
        kExitMissing);

  // Weights of the wrong architecture name the offending tensor.
  GeneratorConfig other = tiny();
  auto w = init_generator<float>(other, 1);
  ParamSet<float> cut;
  for (const auto& n : w.names())
    if (n != "enc.conv1.weight") cut.add(n, w.at(n), w.trainable(n));
  save_archive(f.dir / "cut.txw", cut);
  r = cli({"synthesize", "--input", f.img32, "--weights", f.dir / "cut.txw", "--out", out});
  CHECK(r.code == kExitMissing);
  CHECK(r.err.find("enc.conv1.weight") != std::string::npos);

  w.at("enc.conv1.weight")[0] = std::numeric_limits<float>::infinity();
  save_generator(f.dir / "inf.txw", w, other);
  CHECK(cli({"synthesize", "--input", f.img32, "--weights", f.dir / "inf.txw", "--out", out}).code ==
        kExitNumeric);
  CHECK(binary("synthesize --input " + f.img32.string() + " --weights " + (f.dir / "inf.txw").string() +
               " --out " + out.string()) == 4);
  CHECK(binary("synthesize --input " + f.img32.string() + " --weights " + (f.dir / "none.txw").string() +
               " --out " + out.string()) == 3);
}

TEST_CASE("synthesize in noise mode") {
  const Files& f = files();
  const fs::path a = f.dir / "na.png", b = f.dir / "nb.png";
  auto r = cli({"synthesize", "--mode", "noise", "--input", f.img32, "--weights", f.weights, "--out", a,
                "--size", "96", "--seed", "1"});
  REQUIRE(r.code == kExitOk);
  CHECK(png_shape(a) == Shape{1, 3, 96, 96});
  REQUIRE(cli({"synthesize", "--mode", "noise", "--input", f.img32, "--weights", f.weights, "--out", b,
               "--size", "96", "--seed", "2"})
              .code == kExitOk);
  CHECK_FALSE(load_image(a) == load_image(b));
  REQUIRE(cli({"synthesize", "--mode", "noise", "--input", f.img32, "--weights", f.weights, "--out", b,
               "--size", "96", "--seed", "1"})
              .code == kExitOk);
  CHECK(load_image(a) == load_image(b));

  r = cli({"synthesize", "--mode", "noise", "--input", f.img32, "--weights", f.weights, "--out", a, "--size", "70"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("64") != std::string::npos);
  CHECK(r.err.find("80") != std::string::npos);
  REQUIRE(cli({"synthesize", "--mode", "noise", "--input", f.img32, "--weights", f.weights, "--out", a, "--size",
               "70", "--snap"})
              .code == kExitOk);
  CHECK(png_shape(a) == Shape{1, 3, 64, 64});
}

TEST_CASE("selfsim map rendering") {
  const Files& f = files();
  const fs::path out = f.dir / "map.png";
  REQUIRE(cli({"selfsim", "--input", f.img64, "--weights", f.weights, "--out", out, "--scale", "4"}).code == kExitOk);
  const Tensorf map = load_image(out);
  CHECK(map.shape() == Shape{1, 3, 17, 17});
  CHECK(png_shape(f.dir / "map.png") == Shape{1, 3, 17, 17});

  // Against the naive score map, rescaled the same way.
  auto [w, g] = load_generator(f.weights);
  Binder<float> bind(w, nullptr, false);
  const auto feats = encoder_forward(bind, g, ad::constant(load_image(f.img64)));
  const Tensorf s = reference::selfsim_naive(feats[2].value().cast<double>()).cast<float>();
  const auto [lo, hi] = std::minmax_element(s.data().begin(), s.data().end());
  for (int i = 0; i < 17; ++i)
    for (int j = 0; j < 17; ++j) CHECK(std::abs(map(0, 0, i, j) - (s(0, 0, i, j) - *lo) / (*hi - *lo)) <= 1.0f / 255);

  for (const char* sc : {"8", "16"})
    REQUIRE(cli({"selfsim", "--input", f.img64, "--weights", f.weights, "--out", out, "--scale", sc}).code == kExitOk);
  CHECK(png_shape(out) == Shape{1, 3, 5, 5});
  CHECK(cli({"selfsim", "--input", f.img64, "--weights", f.weights, "--out", out, "--scale", "2"}).code == kExitUsage);

  // Uniform encoder taps keep a constant image constant under partial
  // padding, so every score is zero and the map is uniform.
  auto uw = init_generator<float>(tiny(), 1);
  for (const auto& n : uw.names())
    if (n.rfind("enc.", 0) == 0 && n.size() > 7 && n.substr(n.size() - 7) == ".weight") {
      Tensorf& t = uw.at(n);
      for (float& v : t.data()) v = 1.0f / static_cast<float>(t.c() * t.h() * t.w());
    }
  save_generator(f.dir / "uniform.txw", uw, tiny());
  save_png(f.dir / "flat.png", Tensorf(Shape{1, 3, 64, 64}, 0.6f));
  REQUIRE(cli({"selfsim", "--input", f.dir / "flat.png", "--weights", f.dir / "uniform.txw", "--out", out}).code ==
          kExitOk);
  const Tensorf flat = load_image(out);
  for (float v : flat.data()) REQUIRE(v == flat[0]);
}

TEST_CASE("eval reports") {
  const Files& f = files();
  auto value = [](const Run& r) { return json::parse(r.out).at("value").get<double>(); };
  auto r = cli({"eval", "--a", f.img64, "--b", f.img64, "--metric", "ssim"});
  REQUIRE(r.code == kExitOk);
  const json j = json::parse(r.out);
  CHECK(j["metric"] == "ssim");
  CHECK(j.contains("protocol"));
  CHECK(j.contains("seed"));
  CHECK(j.contains("embedder"));
  CHECK(std::abs(value(r) - 1.0) <= 1e-6);

  const auto c1 = cli({"eval", "--a", f.img64, "--b", f.img32, "--metric", "clpips", "--seed", "4"});
  const auto c2 = cli({"eval", "--a", f.img64, "--b", f.img32, "--metric", "clpips", "--seed", "4"});
  REQUIRE(c1.code == kExitOk);
  CHECK(c1.out == c2.out);
  CHECK(c1.err.find("not a pretrained network") != std::string::npos);
  const auto d1 = cli({"eval", "--a", f.img64, "--b", f.img64, "--metric", "cfid", "--seed", "9"});
  CHECK(d1.out == cli({"eval", "--a", f.img64, "--b", f.img64, "--metric", "cfid", "--seed", "9"}).out);
  CHECK(json::parse(d1.out)["embedder"] == PyramidEmbedder(7).id());

  // Identity crop: the whole image on both sides.
  r = cli({"eval", "--a", f.img64, "--b", f.img64, "--metric", "cfid", "--crop-size", "64"});
  REQUIRE(r.code == kExitOk);
  CHECK(std::abs(value(r)) <= 1e-6);

  CHECK(cli({"eval", "--a", f.img64, "--b", f.img32, "--metric", "ssim"}).code == kExitUsage);
  CHECK(cli({"eval", "--a", f.img64, "--b", f.dir / "none.png"}).code == kExitMissing);
  CHECK(binary("eval --a " + f.img64.string() + " --b " + f.img32.string()) == 2);
}

TEST_CASE("train, log, checkpoint and resume") {
  const fs::path data = scratch_dir("data");
  save_png(data / "t.png", random_image(48, 48, 7));
  const std::vector<std::string> sets = {"--set", "train.h=32", "--set", "train.w=32",
                                         "--set", "generator.width_multiplier=1/16",
                                         "--set", "discriminator.ndf=4", "--set", "discriminator.layers=2",
                                         "--set", "train.gan_crops=2"};
  auto train = [&](const fs::path& out, long long steps, const std::string& resume = {}) {
    std::vector<std::string> a = {"train", "--data", data.string(), "--out-dir", out.string(), "--steps",
                                  std::to_string(steps)};
    a.insert(a.end(), sets.begin(), sets.end());
    if (!resume.empty()) {
      a.push_back("--resume");
      a.push_back(resume);
    }
    return cli(a);
  };
  auto lines = [](const fs::path& p) {
    std::ifstream in(p);
    std::vector<json> v;
    for (std::string l; std::getline(in, l);) v.push_back(json::parse(l));
    return v;
  };

  const fs::path full = scratch_dir("full"), part = scratch_dir("part");
  REQUIRE(train(full, 4).code == kExitOk);
  const auto ref = lines(full / "loss_log.jsonl");
  REQUIRE(ref.size() == 4);
  for (const char* k : {"perceptual", "style", "gan_g", "gan_d", "total", "step", "lr"}) CHECK(ref[0].contains(k));
  CHECK(fs::exists(full / "generator.txw"));
  CHECK(fs::exists(full / "checkpoint_last.txsp"));
  CHECK_NOTHROW(load_generator(full / "generator.txw"));

  REQUIRE(train(part, 2).code == kExitOk);
  REQUIRE(train(part, 4, (part / "checkpoint_last.txsp").string()).code == kExitOk);
  const auto resumed = lines(part / "loss_log.jsonl");
  REQUIRE(resumed.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(resumed[i] == ref[i]);
  CHECK(read_file(part / "checkpoint_last.txsp") == read_file(full / "checkpoint_last.txsp"));

  auto bad = cli({"train", "--data", data.string(), "--out-dir", part.string(), "--set", "train.bogus=1"});
  CHECK(bad.code == kExitUsage);
  CHECK(bad.err.find("train.bogus") != std::string::npos);
  const fs::path empty = scratch_dir("nodata");
  CHECK(cli({"train", "--data", empty.string(), "--out-dir", part.string()}).code == kExitUsage);
  std::ofstream(part / "bad.toml") << "[train]\nh = 33\n";
  bad = cli({"train", "--data", data.string(), "--out-dir", part.string(), "--config", (part / "bad.toml").string()});
  CHECK(bad.code == kExitUsage);
  CHECK(bad.err.find("train.h") != std::string::npos);
  CHECK(cli({"train", "--data", data.string(), "--out-dir", part.string(), "--resume", (part / "nope").string()})
            .code == kExitMissing);
}

TEST_CASE("init writes loadable weights") {
  const fs::path dir = scratch_dir("init");
  REQUIRE(cli({"init", "--out", (dir / "w.txw").string(), "--set", "generator.width_multiplier=0.125", "--seed", "3"})
              .code == kExitOk);
  const auto [w, g] = load_generator(dir / "w.txw");
  CHECK(g.width_multiplier == 0.125);
  CHECK(encode_archive(w) == encode_archive(init_generator<float>(g, 3)));
}
