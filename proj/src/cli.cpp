#include "txsp/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>

#include "txsp/config.hpp"
#include "txsp/image_io.hpp"
#include "txsp/metrics.hpp"
#include "txsp/parallel.hpp"

namespace fs = std::filesystem;

namespace txsp {
namespace {

/// Raised for absent input files so they map to the missing-artifact code.
class MissingArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require_file(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw MissingArtifact(std::string(what) + " '" + p.string() + "' not found");
}

int noise_n5(int input_extent, int target) { return (target - input_extent + 16) / 16; }

struct SynthesizeArgs {
  std::string input, weights, out, mode = "selfsim";
  int scale = 2;
  int size = 0;
  std::uint64_t seed = 0;
  bool snap = false;
};

int cmd_synthesize(const SynthesizeArgs& a, std::ostream& out) {
  require_file(a.input, "input image");
  require_file(a.weights, "weights");
  auto [weights, gcfg] = load_generator(a.weights);
  const Tensorf img = load_image(a.input);
  check_input_dims(gcfg, img.h(), img.w());

  Tensorf result;
  if (a.mode == "selfsim") {
    if (a.scale != 2 && a.scale != 4)
      throw ShapeError("self-similarity mode supports --scale 2 or 4 (the score map limits a "
                       "single pass to 2x); use --mode noise for other sizes");
    result = synthesize(weights, gcfg, img, a.scale);
  } else if (a.mode == "noise") {
    const int th = a.size > 0 ? a.size : a.scale * img.h();
    const int tw = a.size > 0 ? a.size : a.scale * img.w();
    int n5h = noise_n5(img.h(), th), n5w = noise_n5(img.w(), tw);
    const bool exact = (th - img.h()) % 16 == 0 && (tw - img.w()) % 16 == 0 && n5h >= 1 && n5w >= 1;
    if (!exact) {
      const auto nh = nearest_noise_extents(img.h(), th);
      const auto nw = nearest_noise_extents(img.w(), tw);
      if (!a.snap) {
        std::ostringstream msg;
        msg << "noise mode cannot produce " << th << "x" << tw << " from a " << img.h() << "x"
            << img.w() << " input; achievable extents are input + 16k (nearest: height "
            << nh.front() << " or " << nh.back() << ", width " << nw.front() << " or "
            << nw.back() << "); pass --snap to round";
        throw ShapeError(msg.str());
      }
      auto closest = [](const std::vector<int>& c, int t) {
        return std::abs(c.front() - t) <= std::abs(c.back() - t) ? c.front() : c.back();
      };
      n5h = noise_n5(img.h(), closest(nh, th));
      n5w = noise_n5(img.w(), closest(nw, tw));
    }
    std::mt19937_64 rng(a.seed);
    const auto maps = make_noise_maps<float>(n5h, n5w, rng);
    result = synthesize_noise(weights, gcfg, img, maps);
  } else {
    throw ShapeError("--mode must be 'selfsim' or 'noise'");
  }
  save_png(a.out, result);
  out << "wrote " << a.out << " (" << result.h() << "x" << result.w() << ")\n";
  return kExitOk;
}

struct TrainArgs {
  std::string data, config, out_dir, resume;
  std::vector<std::string> set;
  long long steps = -1;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  TrainConfig cfg;
  if (!a.config.empty()) {
    require_file(a.config, "config");
    cfg = load_config(a.config);
  }
  cfg = apply_overrides(cfg, a.set);
  if (a.steps >= 0) cfg.max_steps = a.steps;
  Dataset data = load_dataset(a.data, cfg.h, cfg.w, &err);
  fs::create_directories(a.out_dir);

  std::optional<Trainer> trainer;
  if (!a.resume.empty()) {
    require_file(a.resume, "checkpoint");
    const bool overridden = !a.config.empty() || !a.set.empty() || a.steps >= 0;
    trainer.emplace(Trainer::resume(a.resume, std::move(data),
                                    overridden ? std::optional(cfg) : std::nullopt));
  } else {
    trainer.emplace(cfg, std::move(data));
  }
  const TrainConfig& rc = trainer->config();
  std::ofstream log(fs::path(a.out_dir) / "loss_log.jsonl",
                    a.resume.empty() ? std::ios::trunc : std::ios::app);
  out << "training on " << trainer->state().order.size() << " sample(s), " << rc.h << "x" << rc.w
      << " -> " << 2 * rc.h << "x" << 2 * rc.w << "\n";

  while (!trainer->done()) {
    const int epoch = trainer->state().epoch;
    const double lr = trainer->current_lr();
    const LossReport r = trainer->step();
    json line = to_json(r);
    line["step"] = trainer->state().step;
    line["epoch"] = epoch;
    line["lr"] = lr;
    log << line.dump() << '\n';
    log.flush();
    if (trainer->epoch_finished() && rc.checkpoint_every > 0 &&
        trainer->state().epoch % rc.checkpoint_every == 0)
      trainer->save_checkpoint(fs::path(a.out_dir) /
                               ("checkpoint_epoch" + std::to_string(trainer->state().epoch) + ".txsp"));
  }
  trainer->save_checkpoint(fs::path(a.out_dir) / "checkpoint_last.txsp");
  save_generator(fs::path(a.out_dir) / "generator.txw", trainer->state().gen, rc.generator);
  out << "finished at step " << trainer->state().step << ", epoch " << trainer->state().epoch
      << "\n";
  return kExitOk;
}

struct SelfSimArgs {
  std::string input, weights, out;
  int scale = 4;
};

int cmd_selfsim(const SelfSimArgs& a, std::ostream& out) {
  require_file(a.input, "input image");
  require_file(a.weights, "weights");
  auto [weights, gcfg] = load_generator(a.weights);
  const Tensorf img = load_image(a.input);
  check_input_dims(gcfg, img.h(), img.w());
  const int level = a.scale == 4 ? 2 : a.scale == 8 ? 3 : 4;
  Binder<float> p(weights, nullptr, false);
  const auto feats = encoder_forward(p, gcfg, ad::constant(img));
  const Tensorf s = selfsim_fast(feats[level].value()).scores;

  const auto [lo, hi] = std::minmax_element(s.data().begin(), s.data().end());
  const float range = *hi - *lo;
  Tensorf vis(s.shape());
  for (std::size_t i = 0; i < s.size(); ++i)
    vis[i] = range < 1e-6f ? 1.0f : (s[i] - *lo) / range;
  save_png(a.out, vis);
  out << "wrote " << a.out << " (" << s.h() << "x" << s.w() << ", scores in [" << *lo << ", "
      << *hi << "])\n";
  return kExitOk;
}

struct EvalArgs {
  std::string a, b, metric = "ssim", embedder = "pyramid";
  std::uint64_t seed = 0;
  int crops = 8;
  int crop_size = 0;
};

int cmd_eval(const EvalArgs& e, std::ostream& out, std::ostream& err) {
  require_file(e.a, "image");
  require_file(e.b, "image");
  const Tensorf a = load_image(e.a), b = load_image(e.b);
  json report = {{"metric", e.metric}, {"seed", e.seed}};
  if (e.metric == "ssim") {
    report["value"] = ssim(a, b);
    report["protocol"] = "full-image";
    report["embedder"] = nullptr;
  } else {
    std::unique_ptr<Embedder> emb;
    if (e.embedder == "pyramid")
      emb = std::make_unique<PyramidEmbedder>();
    else if (e.embedder == "channel-mean")
      emb = std::make_unique<ChannelMeanEmbedder>();
    else
      throw ShapeError("--embedder must be 'pyramid' or 'channel-mean'");
    CropEvalOptions opt;
    opt.protocol = e.metric == "cfid" ? CropProtocol::CFid : CropProtocol::CLpipsLike;
    opt.crops = e.crops;
    opt.crop_h = opt.crop_w = e.crop_size;
    opt.seed = e.seed;
    report["value"] = crop_eval(a, b, *emb, opt);
    report["protocol"] = to_string(opt.protocol);
    report["crops"] = e.crops;
    report["embedder"] = emb->id();
    report["note"] =
        "embedder is not a pretrained network; values are comparable only between runs of this "
        "tool with the same embedder";
    err << "NOTE: " << e.metric << " uses the '" << emb->id()
        << "' embedder, not a pretrained network. Scores are not comparable to published "
           "FID/LPIPS numbers.\n";
  }
  out << report.dump() << "\n";
  return kExitOk;
}

struct InitArgs {
  std::string out;
  std::vector<std::string> set;
  std::uint64_t seed = 0;
};

int cmd_init(const InitArgs& a, std::ostream& out) {
  const TrainConfig cfg = apply_overrides(TrainConfig{}, a.set);
  save_generator(a.out, init_generator<float>(cfg.generator, a.seed), cfg.generator);
  out << "wrote " << a.out << "\n";
  return kExitOk;
}

}  // namespace

std::vector<int> nearest_noise_extents(int input_extent, int target) {
  const int lo_k = std::max(1, (target - input_extent + 16) / 16);
  const int lo = 16 * lo_k + input_extent - 16;
  if (lo == target) return {lo, lo};
  if (lo > target) return {lo, lo};
  return {lo, lo + 16};
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Texture expansion by self-similarity guided transposed convolution", "txsp"};
  app.require_subcommand(1);

  SynthesizeArgs syn;
  auto* s = app.add_subcommand("synthesize", "Expand a texture image");
  s->add_option("--input", syn.input, "Input image (PNG or JPEG)")->required();
  s->add_option("--weights", syn.weights, "Generator weight archive")->required();
  s->add_option("--out", syn.out, "Output PNG")->required();
  s->add_option("--mode", syn.mode, "selfsim or noise")->check(CLI::IsMember({"selfsim", "noise"}));
  s->add_option("--scale", syn.scale, "Expansion factor per axis");
  s->add_option("--size", syn.size, "Noise mode: target extent (overrides --scale)");
  s->add_option("--seed", syn.seed, "Noise mode: sampling seed");
  s->add_flag("--snap", syn.snap, "Noise mode: round to the nearest achievable size");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train the generator on a directory of textures");
  t->add_option("--data", tr.data, "Directory of training images")->required();
  t->add_option("--config", tr.config, "Config file (key = value, optional [sections])");
  t->add_option("--out-dir", tr.out_dir, "Directory for logs, checkpoints and weights")->required();
  t->add_option("--resume", tr.resume, "Checkpoint to continue from");
  t->add_option("--set", tr.set, "Override a config key: section.key=value");
  t->add_option("--steps", tr.steps, "Stop after this many steps in total");

  SelfSimArgs ss;
  auto* m = app.add_subcommand("selfsim", "Render the self-similarity map of an image");
  m->add_option("--input", ss.input)->required();
  m->add_option("--weights", ss.weights)->required();
  m->add_option("--scale", ss.scale, "Feature scale denominator: 4, 8 or 16")
      ->check(CLI::IsMember({4, 8, 16}));
  m->add_option("--out", ss.out)->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Compare two images; prints a JSON report");
  e->add_option("--a", ev.a, "Output (or first) image")->required();
  e->add_option("--b", ev.b, "Reference (or second) image")->required();
  e->add_option("--metric", ev.metric)->check(CLI::IsMember({"ssim", "cfid", "clpips"}));
  e->add_option("--seed", ev.seed);
  e->add_option("--crops", ev.crops, "Crops per side");
  e->add_option("--crop-size", ev.crop_size, "Square crop extent (0 = protocol default)");
  e->add_option("--embedder", ev.embedder, "pyramid or channel-mean");

  InitArgs in;
  auto* i = app.add_subcommand("init", "Write randomly initialised generator weights");
  i->add_option("--out", in.out)->required();
  i->add_option("--set", in.set, "Override a generator key: generator.key=value");
  i->add_option("--seed", in.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  }

  configure_threads_from_env();
  try {
    if (*s) return cmd_synthesize(syn, out);
    if (*t) return cmd_train(tr, out, err);
    if (*m) return cmd_selfsim(ss, out);
    if (*e) return cmd_eval(ev, out, err);
    if (*i) return cmd_init(in, out);
  } catch (const MissingArtifact& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitMissing;
  } catch (const ArchiveError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitMissing;
  } catch (const NumericError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitNumeric;
  } catch (const ConfigError& ex) {
    err << "error: config key '" << ex.key() << "': " << ex.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace txsp
