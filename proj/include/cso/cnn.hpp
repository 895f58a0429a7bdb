#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "cso/rng.hpp"

namespace cso {

// Batches are (batch x features) matrices; image features are stored
// channel-major within a row: index = c*H*W + y*W + x.

enum class LayerKind { CONV2D, MAXPOOL2D, FLATTEN, DENSE, DROPOUT };
enum class Activation { NONE, RELU, SOFTMAX };

struct LayerSpec {
  LayerKind kind;
  int channels = 0;   // CONV2D
  int kernel = 3;     // CONV2D
  int stride = 1;     // CONV2D (cross-correlation stride)
  int pool = 2;       // MAXPOOL2D window and stride
  int units = 0;      // DENSE
  double rate = 0.0;  // DROPOUT
  Activation activation = Activation::NONE;
};

inline std::vector<LayerSpec> default_cnn_spec() {
  return {
      {LayerKind::CONV2D, 128, 3, 1, 0, 0, 0.0, Activation::RELU},
      {LayerKind::MAXPOOL2D, 0, 0, 0, 2, 0, 0.0, Activation::NONE},
      {LayerKind::CONV2D, 64, 3, 1, 0, 0, 0.0, Activation::RELU},
      {LayerKind::MAXPOOL2D, 0, 0, 0, 2, 0, 0.0, Activation::NONE},
      {LayerKind::FLATTEN, 0, 0, 0, 0, 0, 0.0, Activation::NONE},
      {LayerKind::DENSE, 0, 0, 0, 0, 800, 0.0, Activation::RELU},
      {LayerKind::DROPOUT, 0, 0, 0, 0, 0, 0.2, Activation::NONE},
      {LayerKind::DENSE, 0, 0, 0, 0, 400, 0.0, Activation::RELU},
      {LayerKind::DROPOUT, 0, 0, 0, 0, 0, 0.2, Activation::NONE},
      {LayerKind::DENSE, 0, 0, 0, 0, 200, 0.0, Activation::RELU},
      {LayerKind::DENSE, 0, 0, 0, 0, 2, 0.0, Activation::SOFTMAX},
  };
}

// Reduced configuration for fast desk runs; same shape ladder, fewer
// channels and units.
inline std::vector<LayerSpec> desk_cnn_spec() {
  return {
      {LayerKind::CONV2D, 16, 3, 1, 0, 0, 0.0, Activation::RELU},
      {LayerKind::MAXPOOL2D, 0, 0, 0, 2, 0, 0.0, Activation::NONE},
      {LayerKind::CONV2D, 8, 3, 1, 0, 0, 0.0, Activation::RELU},
      {LayerKind::MAXPOOL2D, 0, 0, 0, 2, 0, 0.0, Activation::NONE},
      {LayerKind::FLATTEN, 0, 0, 0, 0, 0, 0.0, Activation::NONE},
      {LayerKind::DENSE, 0, 0, 0, 0, 128, 0.0, Activation::RELU},
      {LayerKind::DROPOUT, 0, 0, 0, 0, 0, 0.2, Activation::NONE},
      {LayerKind::DENSE, 0, 0, 0, 0, 64, 0.0, Activation::RELU},
      {LayerKind::DROPOUT, 0, 0, 0, 0, 0, 0.2, Activation::NONE},
      {LayerKind::DENSE, 0, 0, 0, 0, 32, 0.0, Activation::RELU},
      {LayerKind::DENSE, 0, 0, 0, 0, 2, 0.0, Activation::SOFTMAX},
  };
}

namespace nn {

struct Shape {
  int c = 1, h = 0, w = 0;
  int flat() const { return c * h * w; }
};

inline double glorot_limit(int fan_in, int fan_out) {
  return std::sqrt(6.0 / (fan_in + fan_out));
}

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Eigen::MatrixXd forward(const Eigen::MatrixXd& in, bool training) = 0;
  virtual Eigen::MatrixXd backward(const Eigen::MatrixXd& d_out) = 0;
  virtual std::vector<Eigen::MatrixXd*> params() { return {}; }
  virtual std::vector<Eigen::MatrixXd*> grads() { return {}; }
};

class Conv2d final : public Layer {
 public:
  Conv2d(const Shape& in, int channels, int kernel, int stride, Activation act, Rng& rng)
      : in_(in), k_(kernel), stride_(stride), act_(act) {
    if (stride != 1) throw std::invalid_argument("Conv2d: only stride 1 supported");
    out_.c = channels;
    out_.h = in.h - kernel + 1;
    out_.w = in.w - kernel + 1;
    if (out_.h <= 0 || out_.w <= 0) throw std::invalid_argument("Conv2d: kernel larger than input");
    const int fan_in = in.c * kernel * kernel;
    weight_.resize(fan_in, channels);
    const double lim = glorot_limit(fan_in, channels);
    for (Eigen::Index i = 0; i < weight_.size(); ++i) weight_.data()[i] = rng.uniform(-lim, lim);
    bias_ = Eigen::MatrixXd::Zero(1, channels);
    grad_w_ = Eigen::MatrixXd::Zero(fan_in, channels);
    grad_b_ = Eigen::MatrixXd::Zero(1, channels);
  }

  Shape out_shape() const { return out_; }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& in, bool) override {
    if (in.cols() != in_.flat()) throw std::invalid_argument("Conv2d: input width mismatch");
    input_ = in;
    const Eigen::Index b = in.rows();
    const int ohw = out_.h * out_.w;
    Eigen::MatrixXd out(b, out_.flat());
    Eigen::MatrixXd col(ohw, in_.c * k_ * k_);
    for (Eigen::Index s = 0; s < b; ++s) {
      im2col(in.row(s), col);
      Eigen::MatrixXd o = col * weight_;  // ohw x Cout
      o.rowwise() += bias_.row(0);
      for (int oc = 0; oc < out_.c; ++oc) {
        for (int r = 0; r < ohw; ++r) {
          double v = o(r, oc);
          if (act_ == Activation::RELU && v < 0.0) v = 0.0;
          out(s, oc * ohw + r) = v;
        }
      }
    }
    output_ = out;
    return out;
  }

  Eigen::MatrixXd backward(const Eigen::MatrixXd& d_out) override {
    const Eigen::Index b = input_.rows();
    const int ohw = out_.h * out_.w;
    grad_w_.setZero();
    grad_b_.setZero();
    Eigen::MatrixXd d_in = Eigen::MatrixXd::Zero(b, in_.flat());
    Eigen::MatrixXd col(ohw, in_.c * k_ * k_);
    Eigen::MatrixXd d_mat(ohw, out_.c);
    for (Eigen::Index s = 0; s < b; ++s) {
      for (int oc = 0; oc < out_.c; ++oc) {
        for (int r = 0; r < ohw; ++r) {
          double g = d_out(s, oc * ohw + r);
          if (act_ == Activation::RELU && output_(s, oc * ohw + r) <= 0.0) g = 0.0;
          d_mat(r, oc) = g;
        }
      }
      im2col(input_.row(s), col);
      grad_w_.noalias() += col.transpose() * d_mat;
      grad_b_.row(0) += d_mat.colwise().sum();
      const Eigen::MatrixXd d_col = d_mat * weight_.transpose();  // ohw x Cin*k*k
      col2im_add(d_col, d_in, s);
    }
    return d_in;
  }

  std::vector<Eigen::MatrixXd*> params() override { return {&weight_, &bias_}; }
  std::vector<Eigen::MatrixXd*> grads() override { return {&grad_w_, &grad_b_}; }

 private:
  void im2col(const Eigen::RowVectorXd& x, Eigen::MatrixXd& col) const {
    for (int oy = 0; oy < out_.h; ++oy) {
      for (int ox = 0; ox < out_.w; ++ox) {
        const int r = oy * out_.w + ox;
        for (int c = 0; c < in_.c; ++c) {
          for (int ky = 0; ky < k_; ++ky) {
            for (int kx = 0; kx < k_; ++kx) {
              col(r, c * k_ * k_ + ky * k_ + kx) = x[c * in_.h * in_.w + (oy + ky) * in_.w + (ox + kx)];
            }
          }
        }
      }
    }
  }

  void col2im_add(const Eigen::MatrixXd& d_col, Eigen::MatrixXd& d_in, Eigen::Index s) const {
    for (int oy = 0; oy < out_.h; ++oy) {
      for (int ox = 0; ox < out_.w; ++ox) {
        const int r = oy * out_.w + ox;
        for (int c = 0; c < in_.c; ++c) {
          for (int ky = 0; ky < k_; ++ky) {
            for (int kx = 0; kx < k_; ++kx) {
              d_in(s, c * in_.h * in_.w + (oy + ky) * in_.w + (ox + kx)) +=
                  d_col(r, c * k_ * k_ + ky * k_ + kx);
            }
          }
        }
      }
    }
  }

  Shape in_, out_;
  int k_, stride_;
  Activation act_;
  Eigen::MatrixXd weight_, bias_, grad_w_, grad_b_;
  Eigen::MatrixXd input_, output_;
};

class MaxPool2d final : public Layer {
 public:
  MaxPool2d(const Shape& in, int pool) : in_(in), pool_(pool) {
    out_.c = in.c;
    out_.h = in.h / pool;
    out_.w = in.w / pool;
    if (out_.h <= 0 || out_.w <= 0) throw std::invalid_argument("MaxPool2d: window larger than input");
  }

  Shape out_shape() const { return out_; }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& in, bool) override {
    const Eigen::Index b = in.rows();
    Eigen::MatrixXd out(b, out_.flat());
    argmax_.resize(static_cast<std::size_t>(b) * static_cast<std::size_t>(out_.flat()));
    for (Eigen::Index s = 0; s < b; ++s) {
      for (int c = 0; c < in_.c; ++c) {
        for (int oy = 0; oy < out_.h; ++oy) {
          for (int ox = 0; ox < out_.w; ++ox) {
            double best = -std::numeric_limits<double>::infinity();
            int best_idx = -1;
            for (int py = 0; py < pool_; ++py) {
              for (int px = 0; px < pool_; ++px) {
                const int idx = c * in_.h * in_.w + (oy * pool_ + py) * in_.w + (ox * pool_ + px);
                if (in(s, idx) > best) {
                  best = in(s, idx);
                  best_idx = idx;
                }
              }
            }
            const int o = c * out_.h * out_.w + oy * out_.w + ox;
            out(s, o) = best;
            argmax_[static_cast<std::size_t>(s) * out_.flat() + o] = best_idx;
          }
        }
      }
    }
    return out;
  }

  Eigen::MatrixXd backward(const Eigen::MatrixXd& d_out) override {
    const Eigen::Index b = d_out.rows();
    Eigen::MatrixXd d_in = Eigen::MatrixXd::Zero(b, in_.flat());
    for (Eigen::Index s = 0; s < b; ++s) {
      for (int o = 0; o < out_.flat(); ++o) {
        d_in(s, argmax_[static_cast<std::size_t>(s) * out_.flat() + o]) += d_out(s, o);
      }
    }
    return d_in;
  }

 private:
  Shape in_, out_;
  int pool_;
  std::vector<int> argmax_;
};

class Dense final : public Layer {
 public:
  Dense(int n_in, int n_out, Activation act, Rng& rng) : act_(act) {
    weight_.resize(n_in, n_out);
    const double lim = glorot_limit(n_in, n_out);
    for (Eigen::Index i = 0; i < weight_.size(); ++i) weight_.data()[i] = rng.uniform(-lim, lim);
    bias_ = Eigen::MatrixXd::Zero(1, n_out);
    grad_w_ = Eigen::MatrixXd::Zero(n_in, n_out);
    grad_b_ = Eigen::MatrixXd::Zero(1, n_out);
  }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& in, bool) override {
    input_ = in;
    Eigen::MatrixXd out = in * weight_;
    out.rowwise() += bias_.row(0);
    if (act_ == Activation::RELU) {
      out = out.cwiseMax(0.0);
    } else if (act_ == Activation::SOFTMAX) {
      for (Eigen::Index s = 0; s < out.rows(); ++s) {
        const double mx = out.row(s).maxCoeff();
        Eigen::ArrayXd e = (out.row(s).array() - mx).exp();
        out.row(s) = e / e.sum();
      }
    }
    output_ = out;
    return out;
  }

  // Gradient w.r.t. output for NONE/RELU; for SOFTMAX use backward_logits.
  Eigen::MatrixXd backward(const Eigen::MatrixXd& d_out) override {
    if (act_ == Activation::SOFTMAX) {
      throw std::logic_error("Dense: softmax head expects backward_logits");
    }
    Eigen::MatrixXd d_pre = d_out;
    if (act_ == Activation::RELU) {
      d_pre = (output_.array() > 0.0).cast<double>() * d_out.array();
    }
    return backward_logits(d_pre);
  }

  // Gradient w.r.t. pre-activation logits.
  Eigen::MatrixXd backward_logits(const Eigen::MatrixXd& d_pre) {
    grad_w_.noalias() = input_.transpose() * d_pre;
    grad_b_.row(0) = d_pre.colwise().sum();
    return d_pre * weight_.transpose();
  }

  Activation activation() const { return act_; }
  std::vector<Eigen::MatrixXd*> params() override { return {&weight_, &bias_}; }
  std::vector<Eigen::MatrixXd*> grads() override { return {&grad_w_, &grad_b_}; }

 private:
  Activation act_;
  Eigen::MatrixXd weight_, bias_, grad_w_, grad_b_;
  Eigen::MatrixXd input_, output_;
};

// Inverted dropout: surviving activations are divided by the keep rate so
// the inference path needs no rescaling.
class Dropout final : public Layer {
 public:
  Dropout(double rate, Rng& rng) : rate_(rate), rng_(&rng) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("Dropout: rate out of [0,1)");
  }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& in, bool training) override {
    if (!training || rate_ == 0.0) {
      mask_.resize(0, 0);
      return in;
    }
    const double keep = 1.0 - rate_;
    mask_.resize(in.rows(), in.cols());
    for (Eigen::Index i = 0; i < mask_.size(); ++i) {
      mask_.data()[i] = rng_->uniform() < keep ? 1.0 / keep : 0.0;
    }
    return in.cwiseProduct(mask_);
  }

  Eigen::MatrixXd backward(const Eigen::MatrixXd& d_out) override {
    if (mask_.size() == 0) return d_out;
    return d_out.cwiseProduct(mask_);
  }

 private:
  double rate_;
  Rng* rng_;
  Eigen::MatrixXd mask_;
};

}  // namespace nn

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

class CnnModel {
 public:
  CnnModel(const std::vector<LayerSpec>& specs, int image_size, std::uint64_t seed)
      : specs_(specs), rng_(derive_seed(seed, "cnn/init")), dropout_rng_(derive_seed(seed, "cnn/dropout")) {
    nn::Shape shape{1, image_size, image_size};
    bool flattened = false;
    for (const LayerSpec& spec : specs) {
      switch (spec.kind) {
        case LayerKind::CONV2D: {
          auto layer = std::make_unique<nn::Conv2d>(shape, spec.channels, spec.kernel, spec.stride,
                                                    spec.activation, rng_);
          shape = layer->out_shape();
          layers_.push_back(std::move(layer));
          break;
        }
        case LayerKind::MAXPOOL2D: {
          auto layer = std::make_unique<nn::MaxPool2d>(shape, spec.pool);
          shape = layer->out_shape();
          layers_.push_back(std::move(layer));
          break;
        }
        case LayerKind::FLATTEN:
          // channel-major rows are already flat
          flattened = true;
          break;
        case LayerKind::DENSE: {
          layers_.push_back(std::make_unique<nn::Dense>(shape.flat(), spec.units, spec.activation, rng_));
          shape = {1, 1, spec.units};
          break;
        }
        case LayerKind::DROPOUT:
          layers_.push_back(std::make_unique<nn::Dropout>(spec.rate, dropout_rng_));
          break;
      }
      shapes_.push_back(shape);
    }
    (void)flattened;
    auto* head = dynamic_cast<nn::Dense*>(layers_.back().get());
    if (head == nullptr || head->activation() != Activation::SOFTMAX) {
      throw std::invalid_argument("CnnModel: final layer must be a softmax dense layer");
    }
    if (shape.flat() != 2) throw std::invalid_argument("CnnModel: head must have 2 units");
  }

  // Shape after the i-th spec entry (construction-time ladder assertion hook).
  const std::vector<nn::Shape>& shapes() const { return shapes_; }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& batch, bool training) {
    Eigen::MatrixXd x = batch;
    for (auto& layer : layers_) x = layer->forward(x, training);
    return x;
  }

  // Sparse categorical cross-entropy, probabilities clipped at 1e-12.
  static double loss(const Eigen::MatrixXd& probs, const std::vector<int>& labels) {
    if (static_cast<std::size_t>(probs.rows()) != labels.size()) {
      throw std::invalid_argument("loss: batch size mismatch");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || labels[i] >= probs.cols()) throw std::invalid_argument("loss: bad label");
      total += -std::log(std::max(probs(static_cast<Eigen::Index>(i), labels[i]), 1e-12));
    }
    return total / static_cast<double>(labels.size());
  }

  // Backpropagation; requires a preceding training-mode forward pass whose
  // dropout masks are reused. Returns nothing; gradients live in the layers.
  void backward(const Eigen::MatrixXd& probs, const std::vector<int>& labels) {
    const auto b = static_cast<Eigen::Index>(labels.size());
    Eigen::MatrixXd d_logits = probs;
    for (Eigen::Index i = 0; i < b; ++i) d_logits(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
    d_logits /= static_cast<double>(b);
    auto* head = dynamic_cast<nn::Dense*>(layers_.back().get());
    Eigen::MatrixXd d = head->backward_logits(d_logits);
    for (auto it = layers_.rbegin() + 1; it != layers_.rend(); ++it) d = (*it)->backward(d);
  }

  std::vector<Eigen::MatrixXd*> params() {
    std::vector<Eigen::MatrixXd*> out;
    for (auto& l : layers_) {
      for (auto* p : l->params()) out.push_back(p);
    }
    return out;
  }

  std::vector<Eigen::MatrixXd*> grads() {
    std::vector<Eigen::MatrixXd*> out;
    for (auto& l : layers_) {
      for (auto* g : l->grads()) out.push_back(g);
    }
    return out;
  }

  const std::vector<LayerSpec>& specs() const { return specs_; }

 private:
  std::vector<LayerSpec> specs_;
  Rng rng_;
  Rng dropout_rng_;
  std::vector<std::unique_ptr<nn::Layer>> layers_;
  std::vector<nn::Shape> shapes_;
};

class AdamOptimizer {
 public:
  AdamOptimizer(CnnModel& model, const AdamConfig& config) : config_(config) {
    for (auto* p : model.params()) {
      m_.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
      v_.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
    }
  }

  void step(CnnModel& model) {
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, t_);
    const double bc2 = 1.0 - std::pow(config_.beta2, t_);
    auto params = model.params();
    auto grads = model.grads();
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * (*grads[i]);
      v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grads[i]->cwiseProduct(*grads[i]);
      params[i]->array() -= config_.learning_rate * (m_[i].array() / bc1) /
                            ((v_[i].array() / bc2).sqrt() + config_.epsilon);
    }
  }

  long step_count() const { return t_; }

 private:
  AdamConfig config_;
  long t_ = 0;
  std::vector<Eigen::MatrixXd> m_, v_;
};

struct CnnTrainConfig {
  int epochs = 15;
  int batch_size = 200;
  AdamConfig adam;
  std::uint64_t seed = 0;
};

inline void train_cnn(CnnModel& model, const Eigen::MatrixXd& X, const std::vector<int>& labels,
                      const CnnTrainConfig& config) {
  if (static_cast<std::size_t>(X.rows()) != labels.size()) {
    throw std::invalid_argument("train_cnn: size mismatch");
  }
  AdamOptimizer adam(model, config.adam);
  const Eigen::Index n = X.rows();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(config.seed, "cnn/epoch/" + std::to_string(epoch)));
    const std::vector<std::size_t> perm = shuffle_rng.permutation(static_cast<std::size_t>(n));
    for (Eigen::Index start = 0; start < n; start += config.batch_size) {
      const Eigen::Index bs = std::min<Eigen::Index>(config.batch_size, n - start);
      Eigen::MatrixXd batch(bs, X.cols());
      std::vector<int> batch_labels(static_cast<std::size_t>(bs));
      for (Eigen::Index i = 0; i < bs; ++i) {
        batch.row(i) = X.row(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(start + i)]));
        batch_labels[static_cast<std::size_t>(i)] = labels[perm[static_cast<std::size_t>(start + i)]];
      }
      const Eigen::MatrixXd probs = model.forward(batch, true);
      const double batch_loss = CnnModel::loss(probs, batch_labels);
      if (!std::isfinite(batch_loss)) {
        throw std::runtime_error("train_cnn: non-finite loss at epoch " + std::to_string(epoch) +
                                 " step " + std::to_string(adam.step_count()));
      }
      model.backward(probs, batch_labels);
      adam.step(model);
    }
  }
}

inline void save_cnn(CnnModel& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_cnn: cannot open " + path);
  auto params = model.params();
  const std::uint64_t magic = 0x314e4e43ULL;  // "CNN1"
  os.write(reinterpret_cast<const char*>(&magic), 8);
  const std::uint64_t count = params.size();
  os.write(reinterpret_cast<const char*>(&count), 8);
  for (auto* p : params) {
    const std::uint64_t r = static_cast<std::uint64_t>(p->rows()), c = static_cast<std::uint64_t>(p->cols());
    os.write(reinterpret_cast<const char*>(&r), 8);
    os.write(reinterpret_cast<const char*>(&c), 8);
    os.write(reinterpret_cast<const char*>(p->data()), static_cast<std::streamsize>(p->size() * 8));
  }
  if (!os) throw std::runtime_error("save_cnn: write failed");
}

inline void load_cnn(CnnModel& model, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_cnn: cannot open " + path);
  std::uint64_t magic = 0, count = 0;
  is.read(reinterpret_cast<char*>(&magic), 8);
  if (magic != 0x314e4e43ULL) throw std::runtime_error("load_cnn: bad magic");
  is.read(reinterpret_cast<char*>(&count), 8);
  auto params = model.params();
  if (count != params.size()) throw std::runtime_error("load_cnn: parameter count mismatch");
  for (auto* p : params) {
    std::uint64_t r = 0, c = 0;
    is.read(reinterpret_cast<char*>(&r), 8);
    is.read(reinterpret_cast<char*>(&c), 8);
    if (static_cast<Eigen::Index>(r) != p->rows() || static_cast<Eigen::Index>(c) != p->cols()) {
      throw std::runtime_error("load_cnn: shape mismatch");
    }
    is.read(reinterpret_cast<char*>(p->data()), static_cast<std::streamsize>(p->size() * 8));
  }
  if (!is) throw std::runtime_error("load_cnn: truncated file");
}

}  // namespace cso
