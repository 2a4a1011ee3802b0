#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "txsp/archive.hpp"
#include "txsp/generator.hpp"
#include "txsp/losses.hpp"
#include "txsp/optim.hpp"

namespace txsp {

struct TrainConfig {
  /// Input crop size; targets are 2h x 2w.
  int h = 64;
  int w = 64;
  int batch_size = 1;
  double lr0 = 0.0032;
  int lr_decay_every = 150;
  double lr_decay_factor = 0.1;
  int epochs = 600;
  /// Stop after this many steps in total; 0 means no cap.
  long long max_steps = 0;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  AdamConfig adam{};
  LossWeights weights{};
  int gan_crops = 10;
  std::uint64_t extractor_seed = 7;
  /// Checkpoint every this many epochs; 0 disables periodic checkpoints.
  int checkpoint_every = 50;
  GeneratorConfig generator{};
  DiscriminatorConfig discriminator{};

  /// Throws ConfigError naming the first invalid key.
  void validate() const;
};

/// lr0 * factor^floor(epoch / decay_every)
double lr_schedule(int epoch, const TrainConfig& cfg);

struct TrainingSample {
  Tensorf target;  // [1,3,2h,2w]
  Tensorf input;   // [1,3,h,w], the centre crop of target
  std::string source;
};

/// Resizes `img` to 2h x 2w (bilinear) and takes the centre h x w crop.
TrainingSample make_sample(const Tensorf& img, int h, int w, std::string source = {});

struct Dataset {
  std::vector<TrainingSample> samples;
  std::size_t size() const noexcept { return samples.size(); }
};

/// Every decodable PNG/JPEG in `dir` (sorted by file name). Unreadable files
/// are skipped with a warning on `warn`; no usable image is a DatasetError.
Dataset load_dataset(const std::filesystem::path& dir, int h, int w, std::ostream* warn = nullptr);

/// Everything a run needs to continue exactly where it stopped.
struct TrainState {
  ParamSet<float> gen;
  ParamSet<float> disc;
  Optimizer<float> gen_opt;
  Optimizer<float> disc_opt;
  int epoch = 0;
  std::size_t position = 0;  // samples consumed in the current epoch
  std::vector<std::size_t> order;
  long long step = 0;
  std::mt19937_64 rng;
};

json to_json(const LossReport& r);

/// One step on a batch: a single generator forward (train-mode batch norm),
/// a discriminator update on the detached output, then a generator update
/// whose GAN term sees the freshly updated discriminator as a constant.
/// Crops are drawn from `state.rng`. Non-finite losses raise NumericError.
LossReport train_step(const Tensorf& input, const Tensorf& target, TrainState& state,
                      const TrainConfig& cfg, const FeatureExtractor<float>& ext, double lr);

class Trainer {
 public:
  Trainer(TrainConfig cfg, Dataset data);

  /// Restores a checkpoint. `override_cfg` may change run-level settings
  /// (e.g. input size for fine-tuning) but must describe the same networks.
  static Trainer resume(const std::filesystem::path& checkpoint, Dataset data,
                        const std::optional<TrainConfig>& override_cfg = std::nullopt);

  /// Trains on the next batch. Reshuffles at epoch starts.
  LossReport step();
  bool done() const;
  double current_lr() const { return lr_schedule(state_.epoch, cfg_); }

  /// True right after the step that finished an epoch.
  bool epoch_finished() const noexcept { return state_.position == 0 && state_.step > 0; }

  void save_checkpoint(const std::filesystem::path& path);

  const TrainState& state() const noexcept { return state_; }
  TrainState& state() noexcept { return state_; }
  const TrainConfig& config() const noexcept { return cfg_; }
  const FeatureExtractor<float>& extractor() const noexcept { return extractor_; }

 private:
  Trainer(TrainConfig cfg, Dataset data, TrainState state);

  TrainConfig cfg_;
  Dataset data_;
  RandomPyramidExtractor<float> extractor_;
  TrainState state_;
  std::filesystem::path last_checkpoint_;
};

/// "TXSP" | u32 version | u64 CRC-64 of payload | payload, where payload is
/// u64 metadata length | metadata JSON | named-tensor archive.
std::string encode_checkpoint(const TrainState& state, const TrainConfig& cfg);
std::pair<TrainState, TrainConfig> decode_checkpoint(std::string_view bytes);

std::string rng_to_hex(const std::mt19937_64& rng);
std::mt19937_64 rng_from_hex(const std::string& hex);

}  // namespace txsp
