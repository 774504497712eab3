#include "longreg/baselines.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "longreg/kernels.hpp"

namespace longreg {

double median_aggregate(std::span<const double> per_window) {
  if (per_window.empty()) throw std::invalid_argument("median of an empty list");
  std::vector<double> v(per_window.begin(), per_window.end());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

std::vector<double> mean_pool(const EmbeddingSequence& seq) {
  std::vector<double> out(seq.dim(), 0.0);
  for (std::size_t t = 0; t < seq.length(); ++t) {
    const auto row = seq.row(t);
    for (std::size_t j = 0; j < seq.dim(); ++j) out[j] += row[j];
  }
  const double inv = 1.0 / static_cast<double>(seq.length());
  for (double& v : out) v *= inv;
  return out;
}

std::vector<double> mean_pool(const PaddedBatch& batch, std::size_t b) {
  std::vector<double> out(batch.dim, 0.0);
  std::size_t count = 0;
  for (std::size_t t = 0; t < batch.cap; ++t) {
    if (!batch.valid(b, t)) continue;
    const auto row = batch.step(b, t);
    for (std::size_t j = 0; j < batch.dim; ++j) out[j] += row[j];
    ++count;
  }
  if (count == 0) throw std::invalid_argument("mean pool over a fully masked row");
  const double inv = 1.0 / static_cast<double>(count);
  for (double& v : out) v *= inv;
  return out;
}

double RidgeModel::predict(std::span<const double> x) const {
  if (x.size() != weights.size()) throw std::invalid_argument("ridge feature dimension mismatch");
  return intercept + kernels::dot(weights, x);
}

RidgeModel ridge_fit(const FeatureMatrix& x, std::span<const double> y, const RidgeOptions& opt) {
  if (x.rows == 0 || x.cols == 0) throw std::invalid_argument("ridge needs N >= 1 and D >= 1");
  if (x.values.size() != x.rows * x.cols) throw std::invalid_argument("feature matrix shape mismatch");
  if (y.size() != x.rows) throw std::invalid_argument("ridge target count mismatch");
  if (!(opt.lambda >= 0.0) || !std::isfinite(opt.lambda)) throw std::invalid_argument("lambda must be >= 0");

  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const Mat> xm(x.values.data(), static_cast<Eigen::Index>(x.rows), static_cast<Eigen::Index>(x.cols));
  Eigen::Map<const Eigen::VectorXd> ym(y.data(), static_cast<Eigen::Index>(y.size()));

  Eigen::RowVectorXd x_mean = Eigen::RowVectorXd::Zero(xm.cols());
  double y_mean = 0.0;
  if (opt.center) {
    x_mean = xm.colwise().mean();
    y_mean = ym.mean();
  }
  const Eigen::MatrixXd xc = xm.rowwise() - x_mean;
  const Eigen::VectorXd yc = ym.array() - y_mean;

  if (opt.lambda == 0.0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xc);
    if (qr.rank() < xc.cols()) throw std::invalid_argument("singular system: rank-deficient X with lambda = 0");
  }
  Eigen::MatrixXd gram = xc.transpose() * xc;
  gram.diagonal().array() += opt.lambda;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success) throw std::invalid_argument("singular ridge system");
  const Eigen::VectorXd w = ldlt.solve(xc.transpose() * yc);
  if (!w.allFinite()) throw std::invalid_argument("singular ridge system");

  RidgeModel model;
  model.weights.assign(w.data(), w.data() + w.size());
  model.intercept = opt.center ? y_mean - x_mean.dot(w) : 0.0;
  model.lambda = opt.lambda;
  model.centered = opt.center;
  return model;
}

void FfnConfig::validate() const {
  if (input_dim == 0) throw std::invalid_argument("input_dim must be >= 1");
  if (hidden == 0) throw std::invalid_argument("hidden must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
}

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

struct FfnView {
  std::size_t d, h;
  std::size_t w1() const { return 0; }
  std::size_t b1() const { return h * d; }
  std::size_t w2() const { return h * d + h; }
  std::size_t b2() const { return h * d + 2 * h; }
  std::size_t total() const { return h * d + 2 * h + 1; }
};

// Hidden pre-activations into pre (h), returns output with optional keep mask.
double ffn_forward(const FfnView& v, const double* p, const double* x, const double* keep, std::vector<double>& pre,
                   std::vector<double>& act) {
  const auto& k = kernels::active();
  pre.assign(p + v.b1(), p + v.b1() + v.h);
  k.gemv(p + v.w1(), v.h, v.d, x, pre.data());
  act.resize(v.h);
  for (std::size_t j = 0; j < v.h; ++j) {
    act[j] = pre[j] > 0.0 ? pre[j] : 0.0;
    if (keep) act[j] *= keep[j];
  }
  return p[v.b2()] + k.dot(p + v.w2(), act.data(), v.h);
}

}  // namespace

FfnModel::FfnModel(const FfnConfig& config) : config_(config) {
  config_.validate();
  const FfnView v{config_.input_dim, config_.hidden};
  values_.assign(v.total(), 0.0);
  std::mt19937_64 rng(config_.seed);
  const double b1 = 1.0 / std::sqrt(static_cast<double>(v.d));
  for (std::size_t i = 0; i < v.h * v.d; ++i) values_[v.w1() + i] = (2.0 * uniform01(rng) - 1.0) * b1;
  const double b2 = 1.0 / std::sqrt(static_cast<double>(v.h));
  for (std::size_t i = 0; i < v.h; ++i) values_[v.w2() + i] = (2.0 * uniform01(rng) - 1.0) * b2;
}

double FfnModel::predict(std::span<const double> features) const {
  if (features.size() != config_.input_dim) throw std::invalid_argument("FFN feature dimension mismatch");
  std::vector<double> pre, act;
  return ffn_forward({config_.input_dim, config_.hidden}, values_.data(), features.data(), nullptr, pre, act);
}

FfnGradient ffn_backward(const FfnModel& model, const FeatureMatrix& x, std::span<const double> y,
                         std::span<const double> keep_masks) {
  const FfnView v{model.config().input_dim, model.config().hidden};
  if (x.cols != v.d) throw std::invalid_argument("FFN feature dimension mismatch");
  if (x.rows == 0 || y.size() != x.rows) throw std::invalid_argument("FFN batch/target mismatch");
  if (!keep_masks.empty() && keep_masks.size() != x.rows * v.h) throw std::invalid_argument("dropout mask shape mismatch");
  const auto& k = kernels::active();
  const double* p = model.values().data();
  FfnGradient out;
  out.grad.assign(v.total(), 0.0);
  double* g = out.grad.data();
  std::vector<double> pre, act, dact(v.h);
  const double scale = 2.0 / static_cast<double>(x.rows);
  double loss = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    const double* keep = keep_masks.empty() ? nullptr : keep_masks.data() + i * v.h;
    const double* xi = x.values.data() + i * v.d;
    const double pred = ffn_forward(v, p, xi, keep, pre, act);
    const double diff = pred - y[i];
    loss += diff * diff;
    const double dy = scale * diff;
    g[v.b2()] += dy;
    k.axpy(dy, act.data(), g + v.w2(), v.h);
    for (std::size_t j = 0; j < v.h; ++j) {
      const double through = pre[j] > 0.0 ? 1.0 : 0.0;
      dact[j] = dy * p[v.w2() + j] * through * (keep ? keep[j] : 1.0);
    }
    k.axpy(1.0, dact.data(), g + v.b1(), v.h);
    k.ger(dact.data(), v.h, xi, v.d, g + v.w1());
  }
  out.loss = loss / static_cast<double>(x.rows);
  return out;
}

namespace {

class FfnObjective {
 public:
  FfnObjective(const FfnConfig& cfg, const FeatureMatrix& tx, std::span<const double> ty, const FeatureMatrix& vx,
               std::span<const double> vy)
      : scratch_(cfg), tx_(tx), ty_(ty), vx_(vx), vy_(vy) {}

  std::size_t train_size() const { return tx_.rows; }
  std::size_t val_size() const { return vx_.rows; }

  double loss_grad(std::span<const std::size_t> idx, std::span<const double> p, std::span<double> g,
                   std::mt19937_64& rng) {
    load(p);
    batch_.rows = idx.size();
    batch_.cols = tx_.cols;
    batch_.values.clear();
    by_.clear();
    for (std::size_t i : idx) {
      const auto r = tx_.row(i);
      batch_.values.insert(batch_.values.end(), r.begin(), r.end());
      by_.push_back(ty_[i]);
    }
    const double rate = scratch_.config().dropout;
    keep_.clear();
    if (rate > 0.0) {
      keep_.resize(idx.size() * scratch_.config().hidden);
      const double s = 1.0 / (1.0 - rate);
      for (double& m : keep_) m = uniform01(rng) < rate ? 0.0 : s;
    }
    auto res = ffn_backward(scratch_, batch_, by_, keep_);
    std::copy(res.grad.begin(), res.grad.end(), g.begin());
    return res.loss;
  }

  double train_loss(std::span<const double> p) { return mse(p, tx_, ty_); }
  double val_loss(std::span<const double> p) { return mse(p, vx_, vy_); }

 private:
  void load(std::span<const double> p) { std::copy(p.begin(), p.end(), scratch_.values().begin()); }

  double mse(std::span<const double> p, const FeatureMatrix& x, std::span<const double> y) {
    load(p);
    double acc = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
      const double d = scratch_.predict(x.row(i)) - y[i];
      acc += d * d;
    }
    return acc / static_cast<double>(x.rows);
  }

  FfnModel scratch_;
  const FeatureMatrix& tx_;
  std::span<const double> ty_;
  const FeatureMatrix& vx_;
  std::span<const double> vy_;
  FeatureMatrix batch_;
  std::vector<double> by_, keep_;
};

}  // namespace

FfnFit ffn_fit(const FeatureMatrix& train_x, std::span<const double> train_y, const FeatureMatrix& val_x,
               std::span<const double> val_y, const FfnConfig& config, const TrainConfig& train_config) {
  config.validate();
  if (train_x.rows == 0) throw std::invalid_argument("empty training set");
  if (train_x.cols != config.input_dim || (val_x.rows > 0 && val_x.cols != config.input_dim)) {
    throw std::invalid_argument("FFN feature dimension mismatch");
  }
  if (train_y.size() != train_x.rows || val_y.size() != val_x.rows) throw std::invalid_argument("FFN target count mismatch");
  FfnFit fit{FfnModel(config), {}};
  FfnObjective objective(config, train_x, train_y, val_x, val_y);
  fit.history = train(objective, fit.model.values(), train_config);
  return fit;
}

}  // namespace longreg
