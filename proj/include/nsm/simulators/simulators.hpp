#pragma once

#include <complex>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nsm/core/rng.hpp"
#include "nsm/core/types.hpp"
#include "nsm/posterior/gaussian.hpp"

namespace nsm::sim {

/// Process-wide count of forward simulations (every Simulator::simulate call).
long simulator_calls();
void reset_simulator_calls();

class Simulator {
 public:
  virtual ~Simulator() = default;
  virtual std::string name() const = 0;
  virtual std::vector<std::string> theta_names() const = 0;
  virtual std::vector<std::string> x_names() const = 0;
  Index theta_dim() const { return static_cast<Index>(theta_names().size()); }
  Index x_dim() const { return static_cast<Index>(x_names().size()); }
  virtual posterior::GaussianPrior prior() const = 0;
  virtual Vec theta_star() const = 0;
  virtual nlohmann::json constants() const { return nlohmann::json::object(); }

  /// One observation at theta (unconstrained scale). Counted.
  Vec simulate(const Vec& theta, Rng& rng) const;

 protected:
  virtual Vec simulate_impl(const Vec& theta, Rng& rng) const = 0;
  void check_theta(const Vec& theta) const;
};

// ---- g-and-k -------------------------------------------------------------

/// G(u) with raw parameters (a, b, g, k).
double gandk_quantile(double u, double a, double b, double g, double k);

class GandK : public Simulator {
 public:
  std::string name() const override { return "gandk"; }
  std::vector<std::string> theta_names() const override { return {"theta1", "log_theta2", "theta3", "log_theta4"}; }
  std::vector<std::string> x_names() const override { return {"x"}; }
  posterior::GaussianPrior prior() const override;
  Vec theta_star() const override;

 protected:
  Vec simulate_impl(const Vec& theta, Rng& rng) const override;
};

/// count iid draws (count x 1), uncounted helper for tests and banks of repeats.
Mat gandk_simulate(const Vec& theta, Index count, Rng& rng);

// ---- SIR -----------------------------------------------------------------

struct SirConstants {
  long population = 1000;
  int horizon = 150;
  double dt = 1.0;
};

struct SirTrajectory {
  std::vector<long> S, I, R;  // t = 0..T
  std::vector<long> y;        // reported new infections, t = 1..T
};

SirTrajectory sir_trajectory(const Vec& theta, const SirConstants& c, Rng& rng);
/// (attack rate, normalised peak time, normalised peak height).
Vec sir_summaries(const std::vector<long>& y, long population);
/// Binomial thinning with retention r.
std::vector<long> sir_undercount(const std::vector<long>& y, double r, Rng& rng);

class Sir : public Simulator {
 public:
  explicit Sir(SirConstants c = {}) : c_(c) {}
  std::string name() const override { return "sir"; }
  std::vector<std::string> theta_names() const override {
    return {"log_beta", "log_gamma", "logit_rho", "log_i0"};
  }
  std::vector<std::string> x_names() const override { return {"attack_rate", "peak_time", "peak_height"}; }
  posterior::GaussianPrior prior() const override;
  Vec theta_star() const override;
  nlohmann::json constants() const override;
  const SirConstants& config() const { return c_; }

 protected:
  Vec simulate_impl(const Vec& theta, Rng& rng) const override;

 private:
  SirConstants c_;
};

// ---- Turin ---------------------------------------------------------------

struct TurinConstants {
  double bandwidth = 4e9;
  int points = 801;
  int moments = 2;  // J
  double delta_f() const { return bandwidth / (points - 1); }
  /// Delay window: ten times the prior 99.9% quantile of the decay time.
  double window() const;
};

/// Time-domain signal y(t_k) at t_k = k / (K df) from the frequency response.
std::vector<std::complex<double>> turin_idft(const std::vector<std::complex<double>>& Y);
/// log sum_k |y_k|^2 t_k^j / (K df) for j = 0..J.
Vec temporal_moments(const std::vector<std::complex<double>>& y, const TurinConstants& c);
/// Frequency response Y_k; noise_only drops the multipath component.
std::vector<std::complex<double>> turin_response(const Vec& theta, const TurinConstants& c, bool noise_only, Rng& rng);

class Turin : public Simulator {
 public:
  explicit Turin(TurinConstants c = {}) : c_(c) {}
  std::string name() const override { return "turin"; }
  std::vector<std::string> theta_names() const override { return {"log_G0", "log_T", "log_lambda", "log_noise_var"}; }
  std::vector<std::string> x_names() const override;
  posterior::GaussianPrior prior() const override;
  Vec theta_star() const override;
  nlohmann::json constants() const override;
  const TurinConstants& config() const { return c_; }
  /// Faulty-antenna trace: moments of the noise alone. Counted as a simulation.
  Vec noise_only(const Vec& theta, Rng& rng) const;

 protected:
  Vec simulate_impl(const Vec& theta, Rng& rng) const override;

 private:
  TurinConstants c_;
};

std::unique_ptr<Simulator> make_simulator(const std::string& name);

// ---- contamination and datasets ------------------------------------------

enum class Contamination { none, huber_shift, undercount, cauchy, noise_only };
Contamination parse_contamination(const std::string& s);
std::string to_string(Contamination c);

struct ContaminationSpec {
  Contamination kind = Contamination::none;
  double epsilon = 0.0;
  double shift = -50.0;
  double retention = 0.5;
  double cauchy_scale = 1.0;

  void validate() const;
  nlohmann::json to_json() const;
  static ContaminationSpec from_json(const nlohmann::json& j);
};

/// round(eps n) distinct indices, sorted.
std::vector<Index> choose_contaminated(Index n, double epsilon, Rng& rng);

struct Dataset {
  Mat x;
  std::vector<int> flags;  // 1 = contaminated row
  std::string simulator;
  Vec theta;
  std::uint64_t seed = 0;
  ContaminationSpec contamination;

  Index contaminated_count() const;
  /// dir/stem.csv plus dir/stem.json.
  void save(const std::filesystem::path& dir, const std::string& stem) const;
  static Dataset load(const std::filesystem::path& dir, const std::string& stem);
};

/// Adds `shift` to exactly round(eps n) rows; returns flags.
std::vector<int> gandk_contaminate(Mat& samples, double epsilon, double shift, Rng& rng);
/// Adds iid Cauchy(0, scale) noise to every coordinate of round(eps n) rows.
std::vector<int> sir_cauchy_contaminate(Mat& summaries, double epsilon, double scale, Rng& rng);

/// n observations at theta; row i uses stream (seed, "observed", i), so clean and
/// contaminated versions of a row share their simulation randomness.
Dataset observed_dataset(const Simulator& sim, const Vec& theta, Index n, const ContaminationSpec& spec,
                         std::uint64_t seed);

struct Bank {
  Mat theta;
  Mat x;
  std::string simulator;
  std::uint64_t seed = 0;

  void save(const std::filesystem::path& dir) const;  // bank.csv + bank.json
  static Bank load(const std::filesystem::path& dir);
};

/// m prior-predictive pairs, parallel over tasks with streams (seed, "bank", i).
Bank simulate_bank(const Simulator& sim, Index m, std::uint64_t seed);
Bank simulate_bank_serial(const Simulator& sim, Index m, std::uint64_t seed);

}  // namespace nsm::sim
