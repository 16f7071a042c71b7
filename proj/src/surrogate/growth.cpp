#include "nsm/surrogate/growth.hpp"

#include <cmath>
#include <random>

#include "nsm/surrogate/mdn.hpp"

namespace nsm::surrogate {

GrowthScan growth_scan(const Surrogate& model, const Vec& theta, const weights::ImqWeight& w, int directions,
                       Rng& rng, int max_decade) {
  const Index d = model.x_dim();
  std::normal_distribution<double> n01;
  std::vector<Vec> dirs;
  for (int k = 0; k < directions; ++k) {
    Vec u(d);
    for (Index i = 0; i < d; ++i) u(i) = n01(rng);
    dirs.push_back(u / u.norm());
  }
  const auto* mdn = dynamic_cast<const Mdn*>(&model);
  double lambda_min = 0.0, mean_norm = 0.0;
  if (mdn) {
    lambda_min = mdn->variance_lower_bound();
    const auto mix = mdn->mixture(theta);
    mean_norm = mix.means.rowwise().norm().maxCoeff();
  }

  GrowthScan g;
  bool finite = std::isfinite(lambda_min) && std::isfinite(mean_norm);
  for (int e = 0; e <= max_decade; ++e) {
    const double r = std::pow(10.0, e);
    double s_max = 0.0, t_max = 0.0, wl_max = 0.0;
    for (const auto& u : dirs) {
      const Vec x = r * u;
      const auto st = model.score_trace(x, theta);
      const double sn = st.score.norm();
      finite = finite && std::isfinite(sn) && std::isfinite(st.trace);
      s_max = std::max(s_max, sn);
      t_max = std::max(t_max, std::abs(st.trace));
      const double w2 = std::pow(w.weight(x), 2);
      wl_max = std::max(wl_max, w2 * sn * sn + w2 * std::abs(st.trace));
      if (mdn && sn > (r + mean_norm) / lambda_min) g.mdn_bound_holds = false;
    }
    g.radii.push_back(r);
    g.score_norm.push_back(s_max);
    g.trace_abs.push_back(t_max);
    g.weighted.push_back(wl_max);
    g.K1 = std::max(g.K1, s_max / (1 + r * r));
    g.K2 = std::max(g.K2, t_max / (1 + r * r));
  }
  const auto n = g.weighted.size();
  const bool flat_tail = n < 2 || g.weighted[n - 1] <= 1.01 * g.weighted[n - 2] + 1e-12;
  g.passed = finite && std::isfinite(g.K1) && std::isfinite(g.K2) && flat_tail && g.mdn_bound_holds;
  return g;
}

}  // namespace nsm::surrogate
