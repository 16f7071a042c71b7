#include "nsm/sampler/slice.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "nsm/core/error.hpp"

namespace nsm::sampler {

Mat slice_sample(const LogDensity& log_density, const Vec& init, Index count, const SliceConfig& cfg, Rng& rng,
                 SliceStats* stats) {
  const Index d = init.size();
  if (cfg.widths.size() != d || !(cfg.widths.array() > 0).all()) throw std::invalid_argument("slice: widths must be positive, one per coordinate");
  if (cfg.thin < 1 || cfg.warmup < 0 || cfg.max_steps < 1 || count < 0) throw std::invalid_argument("slice: bad configuration");
  SliceStats local;
  SliceStats& st = stats ? *stats : local;

  Vec x = init;
  double lp = log_density(x);
  ++st.evaluations;
  if (!(lp > -std::numeric_limits<double>::infinity()) || std::isnan(lp))
    throw NumericError("slice: log density is not finite at the initial point");

  std::exponential_distribution<double> expo(1.0);
  auto u01 = [&] { return uniform01(rng); };
  auto eval = [&](const Vec& y) {
    ++st.evaluations;
    const double v = log_density(y);
    return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
  };

  Mat out(count, d);
  const long total = static_cast<long>(cfg.warmup) + static_cast<long>(count) * cfg.thin;
  Index kept = 0;
  const long exhausted_before = st.exhausted_brackets;
  for (long it = 0; it < total; ++it) {
    for (Index i = 0; i < d; ++i) {
      const double level = lp - expo(rng);
      const double w = cfg.widths(i);
      const double x0 = x(i);
      double left = x0 - w * u01();
      double right = left + w;
      // Neal's limited stepping out: J steps to the left, K to the right
      int J = static_cast<int>(std::floor(cfg.max_steps * u01()));
      int K = cfg.max_steps - 1 - J;
      Vec y = x;
      y(i) = left;
      while (eval(y) > level) {
        if (J-- == 0) {
          ++st.exhausted_brackets;
          break;
        }
        left -= w;
        y(i) = left;
      }
      y(i) = right;
      while (eval(y) > level) {
        if (K-- == 0) {
          ++st.exhausted_brackets;
          break;
        }
        right += w;
        y(i) = right;
      }
      // shrinkage
      for (;;) {
        y(i) = left + u01() * (right - left);
        const double ly = eval(y);
        if (ly > level) {
          x(i) = y(i);
          lp = ly;
          break;
        }
        if (y(i) < x0)
          left = y(i);
        else
          right = y(i);
        if (right - left < 1e-300) throw NumericError("slice: bracket collapsed");
      }
    }
    if (it >= cfg.warmup && (it - cfg.warmup) % cfg.thin == 0) out.row(kept++) = x.transpose();
  }
  if (st.exhausted_brackets > exhausted_before)
    warn("slice: stepping-out budget exhausted " + std::to_string(st.exhausted_brackets - exhausted_before) +
         " times; brackets accepted as found");
  return out;
}

}  // namespace nsm::sampler
