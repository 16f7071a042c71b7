#include "nsm/train/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nsm/core/error.hpp"
#include "nsm/core/rng.hpp"

namespace nsm::train {

void TrainConfig::validate() const {
  if (!(learning_rate > 0) || !(weight_decay >= 0) || batch_size < 1 || max_epochs < 1 || patience < 1)
    throw ConfigError("training settings must be positive");
  if (!(val_fraction > 0 && val_fraction < 1)) throw ConfigError("val_fraction must lie in (0, 1)");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"weight_decay", weight_decay}, {"batch_size", batch_size},
          {"max_epochs", max_epochs},       {"val_fraction", val_fraction}, {"patience", patience},
          {"seed", seed}};
}

nlohmann::json TrainReport::to_json() const {
  return {{"objective", objective},
          {"config", config.to_json()},
          {"train_loss", train_loss},
          {"val_loss", val_loss},
          {"best_epoch", best_epoch},
          {"best_val_loss", best_val_loss},
          {"final_val_loss", final_val_loss},
          {"stopped_early", stopped_early},
          {"x_standardizer", x_standardizer.to_json()},
          {"theta_standardizer", theta_standardizer.to_json()}};
}

Adam::Adam(Index size, double lr, double weight_decay, double beta1, double beta2, double eps)
    : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps), m_(Vec::Zero(size)), v_(Vec::Zero(size)) {}

void Adam::step(Vec& params, const Vec& gradient) {
  ++t_;
  const Vec g = gradient + wd_ * params;
  m_ = b1_ * m_ + (1 - b1_) * g;
  v_ = b2_ * v_ + (1 - b2_) * g.cwiseAbs2();
  const double c1 = 1 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1 - std::pow(b2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

std::pair<double, Vec> objective_and_gradient(const surrogate::Surrogate& model, const Vec& params, const Mat& Z,
                                              const Mat& Th) {
  diff::Tape tape(std::span<const double>(params.data(), static_cast<std::size_t>(params.size())));
  diff::Var root = model.record_objective(tape, Z, Th);
  Vec g(params.size());
  const double v = tape.backward(root, std::span<double>(g.data(), static_cast<std::size_t>(g.size())));
  return {v, g};
}

namespace {

double objective_value(const surrogate::Surrogate& model, const Vec& params, const Mat& Z, const Mat& Th) {
  // evaluated in chunks to bound tape memory; rows weigh equally
  const Index chunk = 2048;
  double total = 0.0;
  for (Index s = 0; s < Z.rows(); s += chunk) {
    const Index len = std::min(chunk, Z.rows() - s);
    diff::Tape tape(std::span<const double>(params.data(), static_cast<std::size_t>(params.size())));
    total += tape.value(model.record_objective(tape, Z.middleRows(s, len), Th.middleRows(s, len)))(0, 0) *
             static_cast<double>(len);
  }
  return total / static_cast<double>(Z.rows());
}

Mat gather(const Mat& M, const std::vector<Index>& idx, std::size_t begin, std::size_t end) {
  Mat out(static_cast<Index>(end - begin), M.cols());
  for (std::size_t i = begin; i < end; ++i) out.row(static_cast<Index>(i - begin)) = M.row(idx[i]);
  return out;
}

TrainReport fit(surrogate::Surrogate& model, const Mat& theta, const Mat& x, const TrainConfig& cfg,
                const std::string& objective) {
  cfg.validate();
  const Index m = x.rows();
  if (theta.rows() != m || theta.cols() != model.theta_dim() || x.cols() != model.x_dim())
    throw std::invalid_argument("training data shapes do not match the surrogate");
  if (m < cfg.batch_size) throw ConfigError("need at least batch_size simulations to train");

  TrainReport rep;
  rep.objective = objective;
  rep.config = cfg;
  rep.x_standardizer = Standardizer::fit(x);
  rep.theta_standardizer =
      model.uses_theta_standardizer() ? Standardizer::fit(theta) : Standardizer::identity(model.theta_dim());
  model.set_standardizers(rep.x_standardizer, rep.theta_standardizer);
  const Mat Z = rep.x_standardizer.transform_rows(x);
  const Mat Th = rep.theta_standardizer.transform_rows(theta);

  Rng rng = make_rng(cfg.seed, label_id("train"));
  std::vector<Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::max<Index>(1, std::llround(cfg.val_fraction * static_cast<double>(m))));
  std::vector<Index> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<Index> tr(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  const Mat Zv = gather(Z, val, 0, val.size()), Tv = gather(Th, val, 0, val.size());

  Vec params = model.params();
  Adam adam(params.size(), cfg.learning_rate, cfg.weight_decay);
  Vec best = params;
  rep.best_val_loss = std::numeric_limits<double>::infinity();
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(tr.begin(), tr.end(), rng);
    double acc = 0.0;
    for (std::size_t s = 0, batch = 0; s < tr.size(); s += bs, ++batch) {
      const std::size_t e = std::min(tr.size(), s + bs);
      const Mat Zb = gather(Z, tr, s, e), Tb = gather(Th, tr, s, e);
      std::pair<double, Vec> vg;
      try {
        vg = objective_and_gradient(model, params, Zb, Tb);
      } catch (const NumericError& err) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
                           ": " + err.what());
      }
      if (!std::isfinite(vg.first) || !vg.second.allFinite())
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch));
      acc += vg.first * static_cast<double>(e - s);
      adam.step(params, vg.second);
      model.set_params(params);  // re-applies masks
      params = model.params();
    }
    rep.train_loss.push_back(acc / static_cast<double>(tr.size()));
    const double v = objective_value(model, params, Zv, Tv);
    if (!std::isfinite(v)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    rep.val_loss.push_back(v);
    if (v < rep.best_val_loss) {
      rep.best_val_loss = v;
      rep.best_epoch = epoch;
      best = params;
    } else if (epoch - rep.best_epoch >= cfg.patience) {
      rep.stopped_early = true;
      break;
    }
  }
  rep.final_val_loss = rep.val_loss.back();
  model.set_params(best);
  return rep;
}

}  // namespace

TrainReport fit_nle(surrogate::Surrogate& model, const Mat& theta, const Mat& x, const TrainConfig& cfg) {
  if (!model.normalised()) throw ConfigError("likelihood training needs a normalised surrogate (mdn or maf)");
  return fit(model, theta, x, cfg, "negative-log-likelihood");
}

TrainReport fit_score_matching(surrogate::ExpFamEbm& model, const Mat& theta, const Mat& x, const TrainConfig& cfg) {
  return fit(model, theta, x, cfg, "score-matching");
}

}  // namespace nsm::train
