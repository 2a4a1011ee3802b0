#include "txsp/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <ostream>
#include <sstream>

#include "txsp/config.hpp"
#include "txsp/image_io.hpp"

namespace txsp {
namespace {

constexpr char kMagic[4] = {'T', 'X', 'S', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

Tensorf stack(const std::vector<const Tensorf*>& items) {
  const Shape s = items.front()->shape();
  Tensorf out(Shape{static_cast<int>(items.size()), s.c, s.h, s.w});
  std::size_t off = 0;
  for (const Tensorf* t : items) {
    std::copy(t->ptr(), t->ptr() + t->size(), out.ptr() + off);
    off += t->size();
  }
  return out;
}

void check_finite(double v, const char* what, long long step) {
  if (!std::isfinite(v))
    throw NumericError(std::string("non-finite ") + what + " loss at step " + std::to_string(step));
}

ParamSet<float> with_prefix(const ParamSet<float>& src, const std::string& prefix,
                            ParamSet<float> into) {
  for (const auto& n : src.names()) into.add(prefix + n, src.at(n), src.trainable(n));
  return into;
}

ParamSet<float> take_prefix(const ParamSet<float>& src, const std::string& prefix) {
  ParamSet<float> out;
  for (const auto& n : src.names())
    if (n.rfind(prefix, 0) == 0) out.add(n.substr(prefix.size()), src.at(n), src.trainable(n));
  return out;
}

bool is_image_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

double lr_schedule(int epoch, const TrainConfig& cfg) {
  require(epoch >= 0, "lr_schedule: negative epoch");
  return cfg.lr0 * std::pow(cfg.lr_decay_factor, epoch / cfg.lr_decay_every);
}

TrainingSample make_sample(const Tensorf& img, int h, int w, std::string source) {
  require(img.n() == 1 && img.c() == 3, "make_sample expects [1,3,H,W], got " + img.shape().str());
  TrainingSample s;
  s.target = kernels::bilinear_upsample(img, 2 * h, 2 * w);
  s.input = kernels::center_crop(s.target, h, w);
  s.source = std::move(source);
  return s;
}

Dataset load_dataset(const std::filesystem::path& dir, int h, int w, std::ostream* warn) {
  if (!std::filesystem::is_directory(dir))
    throw DatasetError("'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  Dataset data;
  for (const auto& f : files) {
    try {
      data.samples.push_back(make_sample(load_image(f), h, w, f.filename().string()));
    } catch (const ImageIoError& e) {
      if (warn) *warn << "warning: skipping " << f.string() << ": " << e.what() << '\n';
    }
  }
  if (data.samples.empty()) throw DatasetError("no usable images in '" + dir.string() + "'");
  return data;
}

json to_json(const LossReport& r) {
  return {{"perceptual", r.perceptual},
          {"style", r.style},
          {"gan_g", r.gan_g},
          {"gan_d", r.gan_d},
          {"total", r.total}};
}

LossReport train_step(const Tensorf& input, const Tensorf& target, TrainState& state,
                      const TrainConfig& cfg, const FeatureExtractor<float>& ext, double lr) {
  ad::Tape<float> gtape;
  Binder<float> gen(state.gen, &gtape, true);
  const ad::Var<float> out = generator_forward(gen, cfg.generator, ad::constant(input));
  const Shape os = out.shape();
  const GanCrops crops =
      sample_gan_crops(os.h, os.w, input.h(), input.w(), cfg.gan_crops, state.rng);

  LossReport r;
  {
    ad::Tape<float> dtape;
    Binder<float> disc(state.disc, &dtape, true);
    const ad::Var<float> ld = gan_d_loss(disc, cfg.discriminator, out.value(), target, input, crops);
    r.gan_d = ld.value()[0];
    check_finite(r.gan_d, "discriminator", state.step);
    dtape.backward(ld);
    state.disc_opt.step(state.disc, disc.gradients(), lr);
  }

  Binder<float> disc_fixed(state.disc, nullptr, false);
  const ad::Var<float> tgt = ad::constant(target);
  const ad::Var<float> lp = perceptual_loss(out, tgt, ext);
  const ad::Var<float> ls = style_loss(out, tgt, ext);
  const ad::Var<float> lg = gan_g_loss(disc_fixed, cfg.discriminator, out, input, crops);
  const ad::Var<float> total = total_loss(lp, ls, lg, cfg.weights);
  r.perceptual = lp.value()[0];
  r.style = ls.value()[0];
  r.gan_g = lg.value()[0];
  r.total = total.value()[0];
  check_finite(r.total, "generator", state.step);
  gtape.backward(total);
  state.gen_opt.step(state.gen, gen.gradients(), lr);
  return r;
}

// ------------------------------------------------------------ trainer

Trainer::Trainer(TrainConfig cfg, Dataset data)
    : cfg_(std::move(cfg)), data_(std::move(data)), extractor_(cfg_.extractor_seed) {
  cfg_.validate();
  if (data_.samples.empty()) throw DatasetError("training needs at least one sample");
  state_.rng.seed(cfg_.seed);
  const std::uint64_t gen_seed = state_.rng();
  const std::uint64_t disc_seed = state_.rng();
  state_.gen = init_generator<float>(cfg_.generator, gen_seed);
  state_.disc = init_discriminator<float>(cfg_.discriminator, disc_seed);
  state_.gen_opt = Optimizer<float>(cfg_.optimizer, cfg_.adam);
  state_.disc_opt = Optimizer<float>(cfg_.optimizer, cfg_.adam);
}

Trainer::Trainer(TrainConfig cfg, Dataset data, TrainState state)
    : cfg_(std::move(cfg)),
      data_(std::move(data)),
      extractor_(cfg_.extractor_seed),
      state_(std::move(state)) {
  cfg_.validate();
  if (data_.samples.empty()) throw DatasetError("training needs at least one sample");
  if (state_.position != 0 && state_.order.size() != data_.size())
    throw DatasetError("checkpoint was taken mid-epoch over " + std::to_string(state_.order.size()) +
                       " samples but the dataset has " + std::to_string(data_.size()));
}

Trainer Trainer::resume(const std::filesystem::path& checkpoint, Dataset data,
                        const std::optional<TrainConfig>& override_cfg) {
  auto [state, cfg] = decode_checkpoint(read_file(checkpoint));
  if (override_cfg) {
    const json a = to_json(cfg), b = to_json(*override_cfg);
    for (const auto& key : config_keys())
      if ((key.rfind("generator.", 0) == 0 || key.rfind("discriminator.", 0) == 0) &&
          a.at(key) != b.at(key))
        throw ConfigError(key, "differs from the checkpoint; networks must match to resume");
    cfg = *override_cfg;
  }
  Trainer t(std::move(cfg), std::move(data), std::move(state));
  t.last_checkpoint_ = checkpoint;
  return t;
}

bool Trainer::done() const {
  if (cfg_.max_steps > 0 && state_.step >= cfg_.max_steps) return true;
  return state_.epoch >= cfg_.epochs;
}

LossReport Trainer::step() {
  const std::size_t n = data_.size();
  if (state_.position == 0) {
    state_.order.resize(n);
    std::iota(state_.order.begin(), state_.order.end(), std::size_t{0});
    std::shuffle(state_.order.begin(), state_.order.end(), state_.rng);
  }
  const std::size_t end = std::min(n, state_.position + static_cast<std::size_t>(cfg_.batch_size));
  std::vector<const Tensorf*> inputs, targets;
  for (std::size_t i = state_.position; i < end; ++i) {
    const TrainingSample& s = data_.samples[state_.order[i]];
    inputs.push_back(&s.input);
    targets.push_back(&s.target);
  }
  LossReport r;
  try {
    r = train_step(stack(inputs), stack(targets), state_, cfg_, extractor_, current_lr());
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + "; last good checkpoint: " +
                       (last_checkpoint_.empty() ? std::string("none") : last_checkpoint_.string()));
  }
  ++state_.step;
  state_.position = end;
  if (state_.position >= n) {
    state_.position = 0;
    ++state_.epoch;
  }
  return r;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(state_, cfg_));
  last_checkpoint_ = path;
}

// ------------------------------------------------------------ checkpoint

std::string rng_to_hex(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  static const char* digits = "0123456789abcdef";
  std::string hex;
  for (unsigned char c : os.str()) {
    hex += digits[c >> 4];
    hex += digits[c & 15];
  }
  return hex;
}

std::mt19937_64 rng_from_hex(const std::string& hex) {
  if (hex.size() % 2 != 0) throw ArchiveError("malformed RNG state");
  std::string text;
  for (std::size_t i = 0; i < hex.size(); i += 2)
    text += static_cast<char>(std::stoi(hex.substr(i, 2), nullptr, 16));
  std::istringstream is(text);
  std::mt19937_64 rng;
  is >> rng;
  if (!is) throw ArchiveError("malformed RNG state");
  return rng;
}

std::string encode_checkpoint(const TrainState& state, const TrainConfig& cfg) {
  ParamSet<float> all = with_prefix(state.gen, "gen.", {});
  all = with_prefix(state.disc, "disc.", std::move(all));
  all = with_prefix(state.gen_opt.state(), "gen_opt.", std::move(all));
  all = with_prefix(state.disc_opt.state(), "disc_opt.", std::move(all));

  const json meta = {{"epoch", state.epoch},
                     {"position", state.position},
                     {"order", state.order},
                     {"step", state.step},
                     {"rng", rng_to_hex(state.rng)},
                     {"gen_opt_steps", state.gen_opt.steps()},
                     {"disc_opt_steps", state.disc_opt.steps()},
                     {"config", to_json(cfg)}};
  const std::string m = meta.dump();
  std::string payload;
  const std::uint64_t mlen = m.size();
  payload.append(reinterpret_cast<const char*>(&mlen), 8);
  payload += m;
  payload += encode_archive(all);

  std::string out(kMagic, 4);
  const std::uint64_t crc = crc64(payload);
  out.append(reinterpret_cast<const char*>(&kCheckpointVersion), 4);
  out.append(reinterpret_cast<const char*>(&crc), 8);
  out += payload;
  return out;
}

std::pair<TrainState, TrainConfig> decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 24 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw IntegrityError("not a checkpoint (bad magic)");
  std::uint32_t version = 0;
  std::uint64_t crc = 0, mlen = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&crc, bytes.data() + 8, 8);
  if (version != kCheckpointVersion)
    throw IntegrityError("unsupported checkpoint version " + std::to_string(version));
  const std::string_view payload = bytes.substr(16);
  if (crc64(payload) != crc) throw IntegrityError("checkpoint checksum mismatch");
  std::memcpy(&mlen, payload.data(), 8);
  if (mlen > payload.size() - 8) throw IntegrityError("checkpoint metadata truncated");
  const json meta = json::parse(payload.substr(8, mlen));
  const ParamSet<float> all = decode_archive<float>(payload.substr(8 + mlen));

  TrainConfig cfg = train_config_from_json(meta.at("config"));
  TrainState s;
  s.gen = take_prefix(all, "gen.");
  s.disc = take_prefix(all, "disc.");
  validate_layout(s.gen, generator_layout(cfg.generator));
  validate_layout(s.disc, discriminator_layout(cfg.discriminator));
  s.gen_opt = Optimizer<float>(cfg.optimizer, cfg.adam);
  s.disc_opt = Optimizer<float>(cfg.optimizer, cfg.adam);
  s.gen_opt.load_state(take_prefix(all, "gen_opt."), meta.at("gen_opt_steps").get<long long>());
  s.disc_opt.load_state(take_prefix(all, "disc_opt."), meta.at("disc_opt_steps").get<long long>());
  s.epoch = meta.at("epoch").get<int>();
  s.position = meta.at("position").get<std::size_t>();
  s.order = meta.at("order").get<std::vector<std::size_t>>();
  s.step = meta.at("step").get<long long>();
  s.rng = rng_from_hex(meta.at("rng").get<std::string>());
  return {std::move(s), std::move(cfg)};
}

}  // namespace txsp
