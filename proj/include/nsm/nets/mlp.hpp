#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "nsm/core/rng.hpp"
#include "nsm/core/types.hpp"
#include "nsm/diff/tape.hpp"

namespace nsm::nets {

struct HeadSpec {
  std::string name;
  Index dim = 1;
  bool softplus = false;
};

struct MlpSpec {
  Index input_dim = 1;
  Index cond_dim = 0;  // conditioning vector, fed to every layer and head
  std::vector<Index> hidden;
  std::vector<HeadSpec> heads;
  bool masked = false;  // MADE masks; every head must then have dim == input_dim
};

enum class HessianMode { none, diagonal, full };

struct HeadDerivatives {
  Vec value;
  Mat jacobian;                // dim x input_dim
  Mat hessian_diag;            // dim x input_dim, row o holds diag of the Hessian of output o
  std::vector<Mat> hessians;   // full per-output Hessians (HessianMode::full only)
};

/// One affine block inside the flat parameter vector. W is out x in, U is
/// out x cond, b is stored as a 1 x out row; all column-major.
struct Block {
  Index in = 0;
  Index out = 0;
  std::size_t w = 0;
  std::size_t u = 0;
  std::size_t b = 0;
  Mat mask;  // out x in, empty when unmasked
};

/// tanh multilayer perceptron with named heads and analytic input derivatives.
class Mlp {
 public:
  Mlp() = default;
  /// All parameters zero.
  explicit Mlp(MlpSpec spec);
  /// Glorot-uniform weights, biases 0.01.
  Mlp(MlpSpec spec, Rng& rng);

  const MlpSpec& spec() const { return spec_; }
  Index param_count() const { return static_cast<Index>(params_.size()); }
  const Vec& params() const { return params_; }
  /// Copies and zeroes masked-out weights.
  void set_params(const Vec& params);
  Vec& mutable_params() { return params_; }

  const std::vector<Block>& blocks() const { return blocks_; }
  std::size_t hidden_count() const { return spec_.hidden.size(); }
  Eigen::Map<const Mat> W(std::size_t block) const;
  Eigen::Map<const Mat> U(std::size_t block) const;
  Eigen::Map<const Vec> b(std::size_t block) const;

  std::vector<Vec> forward(const Vec& x, const Vec& theta) const;
  /// Row-batched forward; X is B x input_dim, Theta is B x cond_dim (or 1 x cond_dim, broadcast).
  std::vector<Mat> forward_batch(const Mat& X, const Mat& Theta) const;
  std::vector<HeadDerivatives> derivatives(const Vec& x, const Vec& theta, HessianMode mode) const;

  /// Records the batched forward on a tape whose parameter vector holds this
  /// net's parameters starting at `offset`. Theta may be a default Var when cond_dim == 0.
  std::vector<diff::Var> record(diff::Tape& tape, diff::Var X, diff::Var Theta, std::size_t offset) const;

  void save(const std::filesystem::path& stem) const;  // stem.bin + stem.json
  static Mlp load(const std::filesystem::path& stem);

 private:
  void layout();
  void check_input(const Vec& x, const Vec& theta) const;

  MlpSpec spec_;
  std::vector<Block> blocks_;
  Vec params_;
};

/// MADE connectivity: input j (0-based) has degree j+1, hidden unit k degree
/// k mod d (degree 0 sees only the conditioning vector), output i needs degree < i+1.
std::vector<Mat> made_masks(Index input_dim, const std::vector<Index>& hidden);

}  // namespace nsm::nets
