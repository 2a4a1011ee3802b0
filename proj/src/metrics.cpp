#include "txsp/metrics.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Dense>

namespace txsp {
namespace {

// Valid-mode separable filter of one plane.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w,
                                 const std::vector<double>& taps) {
  const int k = static_cast<int>(taps.size());
  const int oh = h - k + 1, ow = w - k + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < ow; ++j) {
      double s = 0;
      for (int t = 0; t < k; ++t) s += taps[t] * src[static_cast<std::size_t>(i) * w + j + t];
      rows[static_cast<std::size_t>(i) * ow + j] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int i = 0; i < oh; ++i)
    for (int j = 0; j < ow; ++j) {
      double s = 0;
      for (int t = 0; t < k; ++t) s += taps[t] * rows[static_cast<std::size_t>(i + t) * ow + j];
      out[static_cast<std::size_t>(i) * ow + j] = s;
    }
  return out;
}

Eigen::MatrixXd as_matrix(const EmbeddingSet& s) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(s.size()), s.dim);
  for (std::size_t i = 0; i < s.size(); ++i) {
    require(static_cast<int>(s.vectors[i].size()) == s.dim,
            "embedding " + std::to_string(i) + " has the wrong dimension");
    for (int j = 0; j < s.dim; ++j) m(static_cast<Eigen::Index>(i), j) = s.vectors[i][j];
  }
  return m;
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& mu) {
  const Eigen::MatrixXd c = x.rowwise() - mu;
  const double denom = x.rows() > 1 ? static_cast<double>(x.rows() - 1) : 1.0;
  Eigen::MatrixXd cov = (c.transpose() * c) / denom;
  cov.diagonal().array() += 1e-6;
  return cov;
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

std::vector<double> gaussian_taps(int size, double sigma) {
  std::vector<double> taps(size);
  const double c = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) taps[i] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
  const double s = std::accumulate(taps.begin(), taps.end(), 0.0);
  for (double& t : taps) t /= s;
  return taps;
}

double ssim(const Tensorf& a, const Tensorf& b, const SsimConfig& cfg) {
  require(a.shape() == b.shape(), "ssim: " + a.shape().str() + " vs " + b.shape().str());
  require_nonempty(a.shape(), "ssim");
  require(a.h() >= cfg.window && a.w() >= cfg.window,
          "ssim: images must be at least " + std::to_string(cfg.window) + " pixels per side");
  const auto taps = gaussian_taps(cfg.window, cfg.sigma);
  const double c1 = std::pow(cfg.k1 * cfg.dynamic_range, 2);
  const double c2 = std::pow(cfg.k2 * cfg.dynamic_range, 2);
  const int h = a.h(), w = a.w();
  const std::size_t plane = a.shape().plane();
  double total = 0;
  std::size_t count = 0;
  for (int n = 0; n < a.n(); ++n)
    for (int c = 0; c < a.c(); ++c) {
      std::vector<double> x(a.plane(n, c), a.plane(n, c) + plane);
      std::vector<double> y(b.plane(n, c), b.plane(n, c) + plane);
      std::vector<double> xx(plane), yy(plane), xy(plane);
      for (std::size_t i = 0; i < plane; ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
      }
      const auto mx = filter_valid(x, h, w, taps), my = filter_valid(y, h, w, taps);
      const auto sxx = filter_valid(xx, h, w, taps), syy = filter_valid(yy, h, w, taps);
      const auto sxy = filter_valid(xy, h, w, taps);
      for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = sxx[i] - mx[i] * mx[i];
        const double vy = syy[i] - my[i] * my[i];
        const double cov = sxy[i] - mx[i] * my[i];
        total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
                 ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
      }
      count += mx.size();
    }
  return total / static_cast<double>(count);
}

double frechet_distance(const EmbeddingSet& a, const EmbeddingSet& b) {
  require(a.dim == b.dim, "frechet_distance: dimensions " + std::to_string(a.dim) + " and " +
                              std::to_string(b.dim) + " differ");
  require(a.dim > 0 && a.size() > 0 && b.size() > 0, "frechet_distance: empty embedding set");
  const Eigen::MatrixXd xa = as_matrix(a), xb = as_matrix(b);
  const Eigen::RowVectorXd mua = xa.colwise().mean(), mub = xb.colwise().mean();
  const Eigen::MatrixXd sa = covariance(xa, mua), sb = covariance(xb, mub);
  const Eigen::MatrixXd ra = sqrt_psd(sa);
  const Eigen::MatrixXd inner = ra * sb * ra;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()),
                                                    Eigen::EigenvaluesOnly);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (mua - mub).squaredNorm() + sa.trace() + sb.trace() - 2 * tr_sqrt;
  return std::max(0.0, d);
}

PyramidEmbedder::PyramidEmbedder(std::uint64_t seed) : ext_(seed) {}

std::vector<double> PyramidEmbedder::embed(const Tensorf& img) const {
  const auto feats = ext_.features(ad::constant(img));
  const Tensorf pooled = kernels::avg_pool_global(feats.back().value());
  return {pooled.data().begin(), pooled.data().end()};
}

int PyramidEmbedder::dim() const { return ext_.channels().back(); }

std::string PyramidEmbedder::id() const { return ext_.id() + "-avgpool"; }

std::vector<double> ChannelMeanEmbedder::embed(const Tensorf& img) const {
  const Tensorf pooled = kernels::avg_pool_global(img);
  return {pooled.data().begin(), pooled.data().end()};
}

double crop_eval(const Tensorf& output, const Tensorf& reference, const Embedder& embedder,
                 const CropEvalOptions& opt) {
  require(output.n() == 1 && reference.n() == 1, "crop_eval expects single images");
  require(opt.crops >= 1, "crop_eval: crop count must be positive");
  std::mt19937_64 rng(opt.seed);
  auto embed_crop = [&](const Tensorf& img, kernels::CropAnchor at, int ch, int cw) {
    auto v = embedder.embed(kernels::crop(img, at.top, at.left, ch, cw));
    require(static_cast<int>(v.size()) == embedder.dim(), "embedder returned the wrong dimension");
    return v;
  };

  if (opt.protocol == CropProtocol::CFid) {
    const int ch = opt.crop_h > 0 ? opt.crop_h : output.h() / 2;
    const int cw = opt.crop_w > 0 ? opt.crop_w : output.w() / 2;
    require(ch <= reference.h() && cw <= reference.w() && ch <= output.h() && cw <= output.w(),
            "crop_eval: crop does not fit both images");
    const bool paired = output.shape() == reference.shape();
    EmbeddingSet a{embedder.dim(), {}}, b{embedder.dim(), {}};
    for (int i = 0; i < opt.crops; ++i) {
      const auto at = kernels::random_anchor(output.h(), output.w(), ch, cw, rng);
      const auto bt = paired ? at : kernels::random_anchor(reference.h(), reference.w(), ch, cw, rng);
      a.vectors.push_back(embed_crop(output, at, ch, cw));
      b.vectors.push_back(embed_crop(reference, bt, ch, cw));
    }
    return frechet_distance(a, b);
  }

  const int ch = opt.crop_h > 0 ? opt.crop_h : reference.h();
  const int cw = opt.crop_w > 0 ? opt.crop_w : reference.w();
  require(ch == reference.h() && cw == reference.w(),
          "crop_eval: cLPIPS-like crops must match the reference extent");
  const auto ref = embedder.embed(reference);
  double total = 0;
  for (int i = 0; i < opt.crops; ++i) {
    const auto at = kernels::random_anchor(output.h(), output.w(), ch, cw, rng);
    const auto v = embed_crop(output, at, ch, cw);
    double d = 0;
    for (std::size_t k = 0; k < v.size(); ++k) d += std::abs(v[k] - ref[k]);
    total += d / static_cast<double>(v.size());
  }
  return total / opt.crops;
}

std::string to_string(CropProtocol p) { return p == CropProtocol::CFid ? "cfid" : "clpips"; }

}  // namespace txsp
