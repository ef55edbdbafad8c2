#include "stnq/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace stnq {

std::string to_string(WeightMode m) {
  return m == WeightMode::Standard ? "standard" : "exponentiated";
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::ReluN: return "relu_n";
    case Activation::Tanh: return "tanh";
  }
  throw std::logic_error("bad activation");
}

WeightMode weight_mode_from_string(const std::string& s) {
  if (s == "standard") return WeightMode::Standard;
  if (s == "exponentiated") return WeightMode::Exponentiated;
  throw std::invalid_argument("unknown weight mode: " + s);
}

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "relu") return Activation::Relu;
  if (s == "relu_n") return Activation::ReluN;
  if (s == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation: " + s);
}

DenseLayer::DenseLayer(int in, int out, WeightMode mode, Activation act,
                       double relu_bound)
    : W(out, in),
      b(out, 0.0),
      grad_W(out, in),
      grad_b(out, 0.0),
      in_(in),
      out_(out),
      mode_(mode),
      act_(act),
      relu_bound_(relu_bound) {
  if (in < 1 || out < 1) throw std::invalid_argument("DenseLayer: bad shape");
  if (relu_bound <= 0.0) throw std::invalid_argument("DenseLayer: relu bound must be > 0");
}

const Matrix& DenseLayer::effective_weights() const {
  if (mode_ == WeightMode::Standard) return W;
  if (eff_dirty_) {
    eff_ = W;
    for (double& w : eff_.data) w = std::exp(w);
    eff_dirty_ = false;
  }
  return eff_;
}

void DenseLayer::mark_dirty() { eff_dirty_ = true; }

Matrix DenseLayer::forward(const Matrix& x, bool train) {
  if (x.cols != in_) throw std::invalid_argument("DenseLayer::forward: width mismatch");
  Matrix pre = matmul_nt(x, effective_weights());
  for (int i = 0; i < pre.rows; ++i) {
    double* r = pre.row(i);
    for (int j = 0; j < out_; ++j) r[j] += b[j];
  }
  if (train) {
    in_cache_ = x;
    pre_cache_ = pre;
    have_cache_ = true;
  }
  Matrix out = std::move(pre);
  switch (act_) {
    case Activation::Identity:
      break;
    case Activation::Relu:
      for (double& v : out.data) v = std::max(v, 0.0);
      break;
    case Activation::ReluN:
      for (double& v : out.data) v = std::clamp(v, 0.0, relu_bound_);
      break;
    case Activation::Tanh:
      for (double& v : out.data) v = std::tanh(v);
      break;
  }
  return out;
}

Matrix DenseLayer::backward(const Matrix& dy) {
  if (!have_cache_) throw std::logic_error("DenseLayer::backward before forward");
  if (dy.rows != pre_cache_.rows || dy.cols != out_) {
    throw std::invalid_argument("DenseLayer::backward: shape mismatch");
  }
  Matrix dpre = dy;
  switch (act_) {
    case Activation::Identity:
      break;
    case Activation::Relu:
      for (std::size_t i = 0; i < dpre.data.size(); ++i) {
        if (!(pre_cache_.data[i] > 0.0)) dpre.data[i] = 0.0;
      }
      break;
    case Activation::ReluN:
      // subgradient 0 at the kinks themselves
      for (std::size_t i = 0; i < dpre.data.size(); ++i) {
        double p = pre_cache_.data[i];
        if (!(p > 0.0 && p < relu_bound_)) dpre.data[i] = 0.0;
      }
      break;
    case Activation::Tanh:
      for (std::size_t i = 0; i < dpre.data.size(); ++i) {
        double t = std::tanh(pre_cache_.data[i]);
        dpre.data[i] *= 1.0 - t * t;
      }
      break;
  }

  Matrix de = matmul_tn(dpre, in_cache_);  // gradient w.r.t. effective weights
  if (mode_ == WeightMode::Standard) {
    for (std::size_t i = 0; i < de.data.size(); ++i) grad_W.data[i] += de.data[i];
  } else {
    const Matrix& eff = effective_weights();
    for (std::size_t i = 0; i < de.data.size(); ++i) {
      grad_W.data[i] += de.data[i] * eff.data[i];
    }
  }
  for (int i = 0; i < dpre.rows; ++i) {
    const double* r = dpre.row(i);
    for (int j = 0; j < out_; ++j) grad_b[j] += r[j];
  }
  return matmul(dpre, effective_weights());
}

void DenseLayer::zero_grad() {
  std::fill(grad_W.data.begin(), grad_W.data.end(), 0.0);
  std::fill(grad_b.begin(), grad_b.end(), 0.0);
}

FeedForwardNet::FeedForwardNet(std::vector<DenseLayer> layers)
    : layers_(std::move(layers)) {
  if (layers_.empty()) throw std::invalid_argument("FeedForwardNet: no layers");
  for (std::size_t i = 1; i < layers_.size(); ++i) {
    if (layers_[i].in_width() != layers_[i - 1].out_width()) {
      throw std::invalid_argument("FeedForwardNet: layer widths do not chain");
    }
  }
}

Matrix FeedForwardNet::forward(const Matrix& x, bool train) {
  Matrix h = x;
  for (DenseLayer& l : layers_) h = l.forward(h, train);
  return h;
}

Matrix FeedForwardNet::backward(const Matrix& dy) {
  Matrix g = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->backward(g);
  return g;
}

void FeedForwardNet::zero_grad() {
  for (DenseLayer& l : layers_) l.zero_grad();
}

void FeedForwardNet::mark_dirty() {
  for (DenseLayer& l : layers_) l.mark_dirty();
}

std::vector<ParamView> FeedForwardNet::params() {
  std::vector<ParamView> out;
  for (DenseLayer& l : layers_) {
    out.push_back({l.W.data.data(), l.grad_W.data.data(), l.W.size()});
    out.push_back({l.b.data(), l.grad_b.data(), l.b.size()});
  }
  return out;
}

long long FeedForwardNet::num_params() const {
  long long n = 0;
  for (const DenseLayer& l : layers_) {
    n += static_cast<long long>(l.W.size()) + static_cast<long long>(l.b.size());
  }
  return n;
}

int FeedForwardNet::in_width() const { return layers_.front().in_width(); }
int FeedForwardNet::out_width() const { return layers_.back().out_width(); }

std::string FeedForwardNet::to_json() const {
  nlohmann::json j;
  j["version"] = 1;
  j["layers"] = nlohmann::json::array();
  for (const DenseLayer& l : layers_) {
    nlohmann::json lj;
    lj["in"] = l.in_width();
    lj["out"] = l.out_width();
    lj["mode"] = to_string(l.mode());
    lj["act"] = to_string(l.activation());
    lj["relu_bound"] = l.relu_bound();
    lj["W"] = l.W.data;
    lj["b"] = l.b;
    j["layers"].push_back(std::move(lj));
  }
  return j.dump(2);
}

FeedForwardNet FeedForwardNet::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  std::vector<DenseLayer> layers;
  for (const nlohmann::json& lj : j.at("layers")) {
    DenseLayer l(lj.at("in").get<int>(), lj.at("out").get<int>(),
                 weight_mode_from_string(lj.at("mode").get<std::string>()),
                 activation_from_string(lj.at("act").get<std::string>()),
                 lj.at("relu_bound").get<double>());
    std::vector<double> w = lj.at("W").get<std::vector<double>>();
    if (w.size() != l.W.size()) throw std::invalid_argument("checkpoint: W size mismatch");
    l.W.data = std::move(w);
    l.b = lj.at("b").get<std::vector<double>>();
    if (l.b.size() != static_cast<std::size_t>(l.out_width())) {
      throw std::invalid_argument("checkpoint: b size mismatch");
    }
    l.mark_dirty();
    layers.push_back(std::move(l));
  }
  return FeedForwardNet(std::move(layers));
}

Vector relu_n(const Vector& z, double bound) {
  if (bound <= 0.0) throw std::invalid_argument("relu_n: bound must be > 0");
  Vector out = z;
  for (double& v : out) v = std::clamp(v, 0.0, bound);
  return out;
}

Vector softmax(const Vector& z) {
  Vector out = log_softmax(z);
  for (double& v : out) v = std::exp(v);
  return out;
}

Vector log_softmax(const Vector& z) {
  if (z.empty()) throw std::invalid_argument("log_softmax: empty input");
  double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - mx);
  double lse = mx + std::log(sum);
  Vector out = z;
  for (double& v : out) v -= lse;
  return out;
}

double entropy_from_logits(const Vector& z) {
  Vector lp = log_softmax(z);
  double h = 0.0;
  for (double v : lp) h -= std::exp(v) * v;
  return h;
}

void orthogonal_init(Matrix& w, double gain, RngStream& rng) {
  const int rows = w.rows, cols = w.cols;
  const bool tall = rows >= cols;
  const int n = tall ? rows : cols;  // long dimension
  const int m = tall ? cols : rows;  // number of orthonormal vectors
  // Gram-Schmidt on m random n-vectors.
  std::vector<Vector> basis;
  basis.reserve(m);
  while (static_cast<int>(basis.size()) < m) {
    Vector v(n);
    for (double& x : v) x = rng.normal();
    for (const Vector& u : basis) {
      double dot = 0.0;
      for (int i = 0; i < n; ++i) dot += u[i] * v[i];
      for (int i = 0; i < n; ++i) v[i] -= dot * u[i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-8) continue;  // essentially-dependent draw; redraw
    for (double& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      w(r, c) = gain * (tall ? basis[c][r] : basis[r][c]);
    }
  }
}

void exponentiated_init(Matrix& w, double noise_sd, RngStream& rng) {
  const double base = -std::log(static_cast<double>(w.cols));
  for (double& v : w.data) v = base + noise_sd * rng.normal();
}

DenseLayer make_standard_layer(int in, int out, Activation act, double gain,
                               RngStream& rng) {
  DenseLayer l(in, out, WeightMode::Standard, act);
  orthogonal_init(l.W, gain, rng);
  return l;
}

DenseLayer make_exponentiated_layer(int in, int out, Activation act,
                                    double relu_bound, RngStream& rng) {
  DenseLayer l(in, out, WeightMode::Exponentiated, act, relu_bound);
  exponentiated_init(l.W, 0.1, rng);
  return l;
}

void AdamState::step(std::vector<ParamView> params) {
  if (m_.empty()) {
    for (const ParamView& p : params) {
      m_.emplace_back(p.size, 0.0);
      v_.emplace_back(p.size, 0.0);
    }
  }
  if (m_.size() != params.size()) throw std::invalid_argument("AdamState: view count changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    ParamView& p = params[i];
    if (m_[i].size() != p.size) throw std::invalid_argument("AdamState: view size changed");
    for (std::size_t k = 0; k < p.size; ++k) {
      const double g = p.grad[k];
      m_[i][k] = cfg_.beta1 * m_[i][k] + (1.0 - cfg_.beta1) * g;
      v_[i][k] = cfg_.beta2 * v_[i][k] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m_[i][k] / bc1;
      const double vhat = v_[i][k] / bc2;
      p.value[k] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

double clip_grad_norm(std::vector<ParamView> params, double max_norm) {
  double sq = 0.0;
  for (const ParamView& p : params) {
    for (std::size_t k = 0; k < p.size; ++k) sq += p.grad[k] * p.grad[k];
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (ParamView& p : params) {
      for (std::size_t k = 0; k < p.size; ++k) p.grad[k] *= scale;
    }
  }
  return norm;
}

}  // namespace stnq
