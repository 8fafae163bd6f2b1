#include <cmath>
#include <random>

#include "facecap/diffusion.hpp"

namespace facecap::diffusion {
namespace {

using ad::Parameter;
using ad::Tape;
using ad::Var;

Parameter<double> gaussian(const std::string& name, std::size_t rows, std::size_t cols,
                           double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, stddev);
  Matrix m(rows, cols);
  for (auto& v : m.data) v = nd(rng);
  return {name, std::move(m)};
}

Parameter<double> filled(const std::string& name, std::size_t rows, std::size_t cols, double v) {
  return {name, Matrix(rows, cols, v)};
}

Parameter<double> dense(const std::string& name, std::size_t in, std::size_t out,
                        std::mt19937_64& rng) {
  return gaussian(name, in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng);
}

}  // namespace

void DenoiserConfig::validate() const {
  if (layers == 0) throw DiffusionError("denoiser: layers must be positive");
  if (d_model == 0 || heads == 0 || d_model % heads != 0) {
    throw DiffusionError("denoiser: d_model " + std::to_string(d_model) +
                         " must be a positive multiple of heads " + std::to_string(heads));
  }
  if (d_model % 2 != 0) throw DiffusionError("denoiser: d_model must be even");
  if (ff_width == 0) throw DiffusionError("denoiser: ff_width must be positive");
  if (window == 0) throw DiffusionError("denoiser: window must be positive");
  if (channels == 0) throw DiffusionError("denoiser: channels must be positive");
  if (sensors == 0) throw DiffusionError("denoiser: sensors must be positive");
}

std::vector<double> timestep_features(std::size_t t, std::size_t dim) {
  const std::size_t half = dim / 2;
  std::vector<double> f(dim, 0.0);
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    f[i] = std::sin(static_cast<double>(t) * freq);
    f[half + i] = std::cos(static_cast<double>(t) * freq);
  }
  return f;
}

Denoiser::Denoiser(const DenoiserConfig& c, std::uint64_t seed) : config_(c) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = c.d_model;
  const std::size_t in = c.channels + c.condition_width();
  in_w_ = dense("in.w", in, d, rng);
  in_b_ = filled("in.b", 1, d, 0.0);
  pos_ = gaussian("pos", c.window, d, 0.02, rng);
  t_w1_ = dense("temb.w1", d, d, rng);
  t_b1_ = filled("temb.b1", 1, d, 0.0);
  t_w2_ = dense("temb.w2", d, d, rng);
  t_b2_ = filled("temb.b2", 1, d, 0.0);
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    Block b{filled(p + "ln1.g", 1, d, 1.0), filled(p + "ln1.b", 1, d, 0.0),
            dense(p + "attn.wq", d, d, rng), filled(p + "attn.bq", 1, d, 0.0),
            dense(p + "attn.wk", d, d, rng), filled(p + "attn.bk", 1, d, 0.0),
            dense(p + "attn.wv", d, d, rng), filled(p + "attn.bv", 1, d, 0.0),
            dense(p + "attn.wo", d, d, rng), filled(p + "attn.bo", 1, d, 0.0),
            filled(p + "ln2.g", 1, d, 1.0), filled(p + "ln2.b", 1, d, 0.0),
            dense(p + "ff.w1", d, c.ff_width, rng), filled(p + "ff.b1", 1, c.ff_width, 0.0),
            dense(p + "ff.w2", c.ff_width, d, rng), filled(p + "ff.b2", 1, d, 0.0)};
    blocks_.push_back(std::move(b));
  }
  out_ln_g_ = filled("out.ln.g", 1, d, 1.0);
  out_ln_b_ = filled("out.ln.b", 1, d, 0.0);
  out_w_ = dense("out.w", d, c.channels, rng);
  out_b_ = filled("out.b", 1, c.channels, 0.0);
}

std::vector<ad::Parameter<double>*> Denoiser::parameters() {
  std::vector<Parameter<double>*> ps{&in_w_, &in_b_, &pos_, &t_w1_, &t_b1_, &t_w2_, &t_b2_};
  for (auto& b : blocks_) {
    for (auto* p : {&b.ln1_g, &b.ln1_b, &b.wq, &b.bq, &b.wk, &b.bk, &b.wv, &b.bv, &b.wo, &b.bo,
                    &b.ln2_g, &b.ln2_b, &b.ff_w1, &b.ff_b1, &b.ff_w2, &b.ff_b2}) {
      ps.push_back(p);
    }
  }
  for (auto* p : {&out_ln_g_, &out_ln_b_, &out_w_, &out_b_}) ps.push_back(p);
  return ps;
}

std::vector<const ad::Parameter<double>*> Denoiser::parameters() const {
  auto ps = const_cast<Denoiser*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

std::size_t Denoiser::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

void Denoiser::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

ad::Parameter<double>& Denoiser::parameter(const std::string& name) {
  for (auto* p : parameters()) {
    if (p->name == name) return *p;
  }
  throw DiffusionError("denoiser has no parameter '" + name + "'");
}

Var<double> Denoiser::embed(Tape<double>& tape, std::size_t t) {
  const auto f = timestep_features(t, config_.d_model);
  auto feat = tape.constant(Matrix({1, f.size()}, f));
  auto h = ad::gelu(ad::linear(feat, tape.parameter(t_w1_), tape.parameter(t_b1_)));
  return ad::linear(h, tape.parameter(t_w2_), tape.parameter(t_b2_));
}

Var<double> Denoiser::forward(Tape<double>& tape, const Matrix& x_t, const Matrix& c,
                              std::size_t t) {
  return forward(tape, tape.constant(x_t), tape.constant(c), t);
}

Var<double> Denoiser::forward(Tape<double>& tape, Var<double> x_t, Var<double> c, std::size_t t) {
  const auto& cfg = config_;
  if (x_t.rows() != cfg.window || x_t.cols() != cfg.channels) {
    throw ad::ShapeError("denoiser: x_t is " + x_t.value().shape_string() + ", expected [" +
                         std::to_string(cfg.window) + "x" + std::to_string(cfg.channels) + "]");
  }
  if (c.rows() != cfg.window || c.cols() != cfg.condition_width()) {
    throw ad::ShapeError("denoiser: condition is " + c.value().shape_string() + ", expected [" +
                         std::to_string(cfg.window) + "x" + std::to_string(cfg.condition_width()) +
                         "]");
  }
  auto h = ad::linear(ad::concat<double>({x_t, c}, 1), tape.parameter(in_w_), tape.parameter(in_b_));
  if (cfg.positional) h = ad::add(h, tape.parameter(pos_));
  h = ad::add(h, embed(tape, t));

  const std::size_t dk = cfg.d_model / cfg.heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  for (auto& b : blocks_) {
    auto n1 = ad::layer_norm(h, tape.parameter(b.ln1_g), tape.parameter(b.ln1_b));
    auto q = ad::linear(n1, tape.parameter(b.wq), tape.parameter(b.bq));
    auto k = ad::linear(n1, tape.parameter(b.wk), tape.parameter(b.bk));
    auto v = ad::linear(n1, tape.parameter(b.wv), tape.parameter(b.bv));
    std::vector<Var<double>> heads;
    for (std::size_t hd = 0; hd < cfg.heads; ++hd) {
      auto qh = ad::slice(q, 1, hd * dk, dk);
      auto kh = ad::slice(k, 1, hd * dk, dk);
      auto vh = ad::slice(v, 1, hd * dk, dk);
      auto att = ad::softmax(ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt_dk), 1);
      heads.push_back(ad::matmul(att, vh));
    }
    auto attn = ad::linear(ad::concat(heads, 1), tape.parameter(b.wo), tape.parameter(b.bo));
    h = ad::add(h, attn);
    auto n2 = ad::layer_norm(h, tape.parameter(b.ln2_g), tape.parameter(b.ln2_b));
    auto ff = ad::gelu(ad::linear(n2, tape.parameter(b.ff_w1), tape.parameter(b.ff_b1)));
    h = ad::add(h, ad::linear(ff, tape.parameter(b.ff_w2), tape.parameter(b.ff_b2)));
  }
  auto out = ad::layer_norm(h, tape.parameter(out_ln_g_), tape.parameter(out_ln_b_));
  return ad::linear(out, tape.parameter(out_w_), tape.parameter(out_b_));
}

Matrix Denoiser::predict(const Matrix& x_t, const Matrix& c, std::size_t t) {
  Tape<double> tape;
  return forward(tape, x_t, c, t).value();
}

}  // namespace facecap::diffusion
