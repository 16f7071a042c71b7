#include "nsm/nets/mlp.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "nsm/core/error.hpp"
#include "nsm/core/io.hpp"

namespace nsm::nets {

namespace {

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

std::vector<Mat> made_masks(Index input_dim, const std::vector<Index>& hidden) {
  auto degree_in = [](Index j) { return j + 1; };
  auto degree_hidden = [&](Index k) { return k % input_dim; };
  std::vector<Mat> masks;
  Index prev = input_dim;
  bool prev_is_input = true;
  for (Index width : hidden) {
    Mat m(width, prev);
    for (Index k = 0; k < width; ++k)
      for (Index j = 0; j < prev; ++j) {
        const Index dj = prev_is_input ? degree_in(j) : degree_hidden(j);
        m(k, j) = degree_hidden(k) >= dj ? 1.0 : 0.0;
      }
    masks.push_back(std::move(m));
    prev = width;
    prev_is_input = false;
  }
  Mat out(input_dim, prev);
  for (Index i = 0; i < input_dim; ++i)
    for (Index j = 0; j < prev; ++j) {
      const Index dj = prev_is_input ? degree_in(j) : degree_hidden(j);
      out(i, j) = dj < i + 1 ? 1.0 : 0.0;
    }
  masks.push_back(std::move(out));
  return masks;
}

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) { layout(); }

Mlp::Mlp(MlpSpec spec, Rng& rng) : spec_(std::move(spec)) {
  layout();
  for (const Block& blk : blocks_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(blk.in + spec_.cond_dim + blk.out));
    std::uniform_real_distribution<double> uni(-limit, limit);
    for (Index i = 0; i < blk.out * blk.in; ++i) params_(static_cast<Index>(blk.w) + i) = uni(rng);
    for (Index i = 0; i < blk.out * spec_.cond_dim; ++i) params_(static_cast<Index>(blk.u) + i) = uni(rng);
    for (Index i = 0; i < blk.out; ++i) params_(static_cast<Index>(blk.b) + i) = 0.01;
  }
  set_params(Vec(params_));
}

void Mlp::layout() {
  if (spec_.input_dim <= 0 || spec_.cond_dim < 0) throw std::invalid_argument("mlp: bad dimensions");
  if (spec_.heads.empty()) throw std::invalid_argument("mlp: no heads");
  std::vector<Mat> masks;
  if (spec_.masked) {
    for (const auto& h : spec_.heads)
      if (h.dim != spec_.input_dim) throw std::invalid_argument("masked mlp: head '" + h.name + "' must have input_dim outputs");
    masks = made_masks(spec_.input_dim, spec_.hidden);
  }
  blocks_.clear();
  std::size_t off = 0;
  auto add_block = [&](Index in, Index out, const Mat* mask) {
    if (out <= 0) throw std::invalid_argument("mlp: zero-width layer");
    Block blk;
    blk.in = in;
    blk.out = out;
    blk.w = off;
    off += static_cast<std::size_t>(in * out);
    blk.u = off;
    off += static_cast<std::size_t>(spec_.cond_dim * out);
    blk.b = off;
    off += static_cast<std::size_t>(out);
    if (mask) blk.mask = *mask;
    blocks_.push_back(std::move(blk));
  };
  Index prev = spec_.input_dim;
  for (std::size_t l = 0; l < spec_.hidden.size(); ++l) {
    add_block(prev, spec_.hidden[l], spec_.masked ? &masks[l] : nullptr);
    prev = spec_.hidden[l];
  }
  for (const auto& h : spec_.heads) add_block(prev, h.dim, spec_.masked ? &masks.back() : nullptr);
  params_ = Vec::Zero(static_cast<Index>(off));
}

void Mlp::set_params(const Vec& params) {
  if (params.size() != static_cast<Index>(params_.size())) throw std::invalid_argument("mlp: parameter count mismatch");
  params_ = params;
  for (const Block& blk : blocks_) {
    if (blk.mask.size() == 0) continue;
    Eigen::Map<Mat> w(params_.data() + blk.w, blk.out, blk.in);
    w = w.cwiseProduct(blk.mask);
  }
}

Eigen::Map<const Mat> Mlp::W(std::size_t i) const {
  const Block& blk = blocks_[i];
  return Eigen::Map<const Mat>(params_.data() + blk.w, blk.out, blk.in);
}

Eigen::Map<const Mat> Mlp::U(std::size_t i) const {
  const Block& blk = blocks_[i];
  return Eigen::Map<const Mat>(params_.data() + blk.u, blk.out, spec_.cond_dim);
}

Eigen::Map<const Vec> Mlp::b(std::size_t i) const {
  const Block& blk = blocks_[i];
  return Eigen::Map<const Vec>(params_.data() + blk.b, blk.out);
}

void Mlp::check_input(const Vec& x, const Vec& theta) const {
  if (x.size() != spec_.input_dim || theta.size() != spec_.cond_dim)
    throw std::invalid_argument("mlp: input has " + std::to_string(x.size()) + "+" + std::to_string(theta.size()) +
                                " entries, expected " + std::to_string(spec_.input_dim) + "+" +
                                std::to_string(spec_.cond_dim));
}

std::vector<Vec> Mlp::forward(const Vec& x, const Vec& theta) const {
  check_input(x, theta);
  Vec h = x;
  const std::size_t nh = hidden_count();
  for (std::size_t l = 0; l < nh; ++l) {
    Vec a = W(l) * h + b(l);
    if (spec_.cond_dim > 0) a.noalias() += U(l) * theta;
    h = a.array().tanh().matrix();
  }
  std::vector<Vec> out;
  for (std::size_t k = 0; k < spec_.heads.size(); ++k) {
    const std::size_t i = nh + k;
    Vec a = W(i) * h + b(i);
    if (spec_.cond_dim > 0) a.noalias() += U(i) * theta;
    if (spec_.heads[k].softplus) a = a.unaryExpr([](double v) { return softplus(v); });
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<Mat> Mlp::forward_batch(const Mat& X, const Mat& Theta) const {
  if (X.cols() != spec_.input_dim) throw std::invalid_argument("mlp: batch width mismatch");
  const bool cond = spec_.cond_dim > 0;
  if (cond && (Theta.cols() != spec_.cond_dim || (Theta.rows() != X.rows() && Theta.rows() != 1)))
    throw std::invalid_argument("mlp: conditioning batch shape mismatch");
  auto affine = [&](const Mat& h, std::size_t i) {
    Mat a = h * W(i).transpose();
    a.rowwise() += b(i).transpose();
    if (cond) {
      if (Theta.rows() == 1)
        a.rowwise() += (U(i) * Theta.row(0).transpose()).transpose();
      else
        a.noalias() += Theta * U(i).transpose();
    }
    return a;
  };
  Mat h = X;
  const std::size_t nh = hidden_count();
  for (std::size_t l = 0; l < nh; ++l) h = affine(h, l).array().tanh().matrix();
  std::vector<Mat> out;
  for (std::size_t k = 0; k < spec_.heads.size(); ++k) {
    Mat a = affine(h, nh + k);
    if (spec_.heads[k].softplus) a = a.unaryExpr([](double v) { return softplus(v); });
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<HeadDerivatives> Mlp::derivatives(const Vec& x, const Vec& theta, HessianMode mode) const {
  check_input(x, theta);
  const Index d = spec_.input_dim;
  const bool full = mode == HessianMode::full;
  const bool diag = mode == HessianMode::diagonal;

  // state for the current layer output h: value, Jacobian, Hessian diag rows or full Hessians
  Vec h = x;
  Mat J = Mat::Identity(d, d);
  Mat Hd = Mat::Zero(d, d);
  std::vector<Mat> Hf;
  if (full) Hf.assign(static_cast<std::size_t>(d), Mat::Zero(d, d));

  // pre-activation propagation through block i
  auto propagate = [&](std::size_t i, Vec& a, Mat& Ja, Mat& Hda, std::vector<Mat>& Hfa) {
    const auto w = W(i);
    a = w * h + b(i);
    if (spec_.cond_dim > 0) a.noalias() += U(i) * theta;
    Ja.noalias() = w * J;
    if (diag) Hda.noalias() = w * Hd;
    if (full) {
      Hfa.assign(static_cast<std::size_t>(a.size()), Mat::Zero(d, d));
      for (Index k = 0; k < a.size(); ++k)
        for (Index j = 0; j < w.cols(); ++j)
          if (w(k, j) != 0.0) Hfa[static_cast<std::size_t>(k)] += w(k, j) * Hf[static_cast<std::size_t>(j)];
    }
  };

  // elementwise nonlinearity with first/second derivative vectors d1, d2
  auto nonlinear = [&](const Vec& d1, const Vec& d2, const Mat& Ja, const Mat& Hda, const std::vector<Mat>& Hfa,
                       Mat& Jo, Mat& Hdo, std::vector<Mat>& Hfo) {
    Jo = d1.asDiagonal() * Ja;
    if (diag) Hdo = d1.asDiagonal() * Hda + d2.asDiagonal() * Ja.cwiseAbs2();
    if (full) {
      Hfo.resize(Hfa.size());
      for (std::size_t k = 0; k < Hfa.size(); ++k) {
        const auto r = Ja.row(static_cast<Index>(k));
        Hfo[k] = d1(static_cast<Index>(k)) * Hfa[k] + d2(static_cast<Index>(k)) * (r.transpose() * r);
      }
    }
  };

  const std::size_t nh = hidden_count();
  for (std::size_t l = 0; l < nh; ++l) {
    Vec a;
    Mat Ja, Hda;
    std::vector<Mat> Hfa;
    propagate(l, a, Ja, Hda, Hfa);
    Vec t = a.array().tanh().matrix();
    Vec d1 = (1.0 - t.array().square()).matrix();
    Vec d2 = (-2.0 * t.array() * d1.array()).matrix();
    Mat Jn, Hdn;
    std::vector<Mat> Hfn;
    nonlinear(d1, d2, Ja, Hda, Hfa, Jn, Hdn, Hfn);
    h = std::move(t);
    J = std::move(Jn);
    Hd = std::move(Hdn);
    Hf = std::move(Hfn);
  }

  std::vector<HeadDerivatives> out;
  for (std::size_t k = 0; k < spec_.heads.size(); ++k) {
    HeadDerivatives hd;
    Vec a;
    Mat Ja, Hda;
    std::vector<Mat> Hfa;
    propagate(nh + k, a, Ja, Hda, Hfa);
    if (spec_.heads[k].softplus) {
      Vec s = a.unaryExpr([](double v) { return sigmoid(v); });
      Vec d2 = (s.array() * (1.0 - s.array())).matrix();
      hd.value = a.unaryExpr([](double v) { return softplus(v); });
      nonlinear(s, d2, Ja, Hda, Hfa, hd.jacobian, hd.hessian_diag, hd.hessians);
    } else {
      hd.value = std::move(a);
      hd.jacobian = std::move(Ja);
      if (diag) hd.hessian_diag = std::move(Hda);
      if (full) hd.hessians = std::move(Hfa);
    }
    out.push_back(std::move(hd));
  }
  return out;
}

std::vector<diff::Var> Mlp::record(diff::Tape& tape, diff::Var X, diff::Var Theta, std::size_t offset) const {
  const bool cond = spec_.cond_dim > 0;
  auto affine = [&](diff::Var h, const Block& blk) {
    diff::Var w = tape.param(offset + blk.w, blk.out, blk.in);
    if (blk.mask.size() != 0) w = diff::mul(w, tape.constant(blk.mask));
    diff::Var a = diff::matmul(h, w, false, true);
    if (cond) a = a + diff::matmul(Theta, tape.param(offset + blk.u, blk.out, spec_.cond_dim), false, true);
    return a + tape.param(offset + blk.b, 1, blk.out);
  };
  diff::Var h = X;
  const std::size_t nh = hidden_count();
  for (std::size_t l = 0; l < nh; ++l) h = diff::tanh(affine(h, blocks_[l]));
  std::vector<diff::Var> out;
  for (std::size_t k = 0; k < spec_.heads.size(); ++k) {
    diff::Var a = affine(h, blocks_[nh + k]);
    if (spec_.heads[k].softplus) a = diff::softplus(a);
    out.push_back(a);
  }
  return out;
}

void Mlp::save(const std::filesystem::path& stem) const {
  static_assert(std::endian::native == std::endian::little, "parameter files are little-endian");
  std::filesystem::path bin = stem;
  bin += ".bin";
  std::ofstream os(bin, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + bin.string());
  os.write(reinterpret_cast<const char*>(params_.data()), static_cast<std::streamsize>(params_.size() * sizeof(double)));

  io::json m;
  m["input_dim"] = spec_.input_dim;
  m["cond_dim"] = spec_.cond_dim;
  m["hidden"] = spec_.hidden;
  m["masked"] = spec_.masked;
  m["param_count"] = params_.size();
  m["heads"] = io::json::array();
  for (const auto& h : spec_.heads) m["heads"].push_back({{"name", h.name}, {"dim", h.dim}, {"softplus", h.softplus}});
  m["masks"] = io::json::array();
  for (const auto& blk : blocks_)
    if (blk.mask.size() != 0) m["masks"].push_back(io::to_json(blk.mask));
  std::filesystem::path js = stem;
  js += ".json";
  io::write_json(js, m);
}

Mlp Mlp::load(const std::filesystem::path& stem) {
  std::filesystem::path js = stem;
  js += ".json";
  const io::json m = io::read_json(js);
  MlpSpec spec;
  try {
    spec.input_dim = m.at("input_dim").get<Index>();
    spec.cond_dim = m.at("cond_dim").get<Index>();
    spec.hidden = m.at("hidden").get<std::vector<Index>>();
    spec.masked = m.at("masked").get<bool>();
    for (const auto& h : m.at("heads"))
      spec.heads.push_back({h.at("name").get<std::string>(), h.at("dim").get<Index>(), h.at("softplus").get<bool>()});
  } catch (const io::json::exception& e) {
    throw ManifestError("bad network manifest " + js.string() + ": " + e.what());
  }
  Mlp net(spec);
  if (m.at("param_count").get<Index>() != net.param_count())
    throw ManifestError("network manifest " + js.string() + " disagrees with its layer shapes");
  std::filesystem::path bin = stem;
  bin += ".bin";
  std::ifstream is(bin, std::ios::binary);
  if (!is) throw ManifestError("missing parameter file " + bin.string());
  Vec p(net.param_count());
  is.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
  if (is.gcount() != static_cast<std::streamsize>(p.size() * sizeof(double)) || is.peek() != EOF)
    throw ManifestError("parameter file " + bin.string() + " has the wrong length");
  net.params_ = p;  // already masked when saved
  return net;
}

}  // namespace nsm::nets
