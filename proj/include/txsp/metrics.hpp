#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "txsp/losses.hpp"

namespace txsp {

struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Mean local SSIM over valid (fully in-bounds) Gaussian windows, averaged
/// over channels and batch items.
double ssim(const Tensorf& a, const Tensorf& b, const SsimConfig& cfg = {});

/// Normalised 1-D Gaussian taps; the 2-D window is their outer product.
std::vector<double> gaussian_taps(int size, double sigma);

/// Row-major sample matrix: `rows` vectors of dimension `dim`.
struct EmbeddingSet {
  int dim = 0;
  std::vector<std::vector<double>> vectors;
  std::size_t size() const noexcept { return vectors.size(); }
};

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}) with unbiased
/// covariances regularised by 1e-6 I. The square-root trace is taken from the
/// eigenvalues of S_a^{1/2} S_b S_a^{1/2}, negatives clamped to 0.
double frechet_distance(const EmbeddingSet& a, const EmbeddingSet& b);

/// Maps one image [1,3,h,w] to a fixed-length vector.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<double> embed(const Tensorf& img) const = 0;
  virtual int dim() const = 0;
  virtual std::string id() const = 0;
};

/// Global average pool of the last level of a fixed random pyramid
/// (64 dimensions with the default channels).
class PyramidEmbedder final : public Embedder {
 public:
  explicit PyramidEmbedder(std::uint64_t seed = 7);
  std::vector<double> embed(const Tensorf& img) const override;
  int dim() const override;
  std::string id() const override;

 private:
  RandomPyramidExtractor<float> ext_;
};

/// Mean over each channel of the image; useful as a transparent test embedder.
class ChannelMeanEmbedder final : public Embedder {
 public:
  std::vector<double> embed(const Tensorf& img) const override;
  int dim() const override { return 3; }
  std::string id() const override { return "channel-mean"; }
};

enum class CropProtocol { CFid, CLpipsLike };

struct CropEvalOptions {
  CropProtocol protocol = CropProtocol::CFid;
  int crops = 8;
  /// Crop extent; 0 selects the default (half the output for cFID, the
  /// reference extent for the cLPIPS-like protocol).
  int crop_h = 0;
  int crop_w = 0;
  std::uint64_t seed = 0;
};

/// cFID: `crops` random crops from the output and from the reference,
/// embedded and compared with frechet_distance. When both images have the
/// same extent each anchor is shared by the two sides.
/// cLPIPS-like: mean L1 distance, in embedding space, between the reference
/// (the input texture) and each of `crops` random output crops.
double crop_eval(const Tensorf& output, const Tensorf& reference, const Embedder& embedder,
                 const CropEvalOptions& opt);

std::string to_string(CropProtocol p);

}  // namespace txsp
