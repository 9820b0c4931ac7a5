#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "depo/mathcore.hpp"
#include "depo/rng.hpp"

namespace depo {

enum class FeatureGenerator { kGaussian, kClustered };

std::string generator_name(FeatureGenerator g);
FeatureGenerator generator_from_name(const std::string& name);

// Configuration error: a world (or experiment) request that cannot be
// honored, e.g. rewards that do not fit in [0, R_max] or an enumeration
// budget overrun.
struct ConfigurationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct WorldSpec {
  int num_prompts = 16;   // M
  int pool_size = 4;      // K, responses per prompt
  int feature_dim = 4;    // d
  // When positive, raw features are generated at this dimension and pushed
  // through the fixed sparse random projection down to feature_dim.
  int raw_dim = 0;
  Vec theta_plus;         // ground-truth reward direction, ||.||_2 <= S
  double S = 3.5;
  double R_max = 7.0;
  Vec prompt_weights;     // rho; empty means uniform
  std::uint64_t seed = 42;
  FeatureGenerator generator = FeatureGenerator::kGaussian;
};

struct ResponseFeature {
  int prompt_id = 0;
  int response_id = 0;
  Vec phi;
};

// Fixed sparse random projection with entries in {-1, 0, +1} scaled by
// sqrt(s / rows); each entry is nonzero with probability 1/s.
class ProjectionMatrix {
 public:
  ProjectionMatrix(int rows, int cols, double sparsity, std::uint64_t seed);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double sparsity() const { return sparsity_; }
  std::uint64_t seed() const { return seed_; }
  long nonzeros() const { return nonzeros_; }

  Vec apply(const Vec& v) const;

 private:
  int rows_;
  int cols_;
  double sparsity_;
  double scale_;
  std::uint64_t seed_;
  long nonzeros_ = 0;
  // Per output row: (input column, sign).
  std::vector<std::vector<std::pair<int, int>>> entries_;
};

Vec sparse_project(const ProjectionMatrix& p, const Vec& v);

// Subtracts the per-prompt mean feature; pairwise differences are preserved.
std::vector<ResponseFeature> center_per_prompt(const std::vector<ResponseFeature>& features);

struct PreferenceDraw {
  int winner = 0;
  int loser = 0;
  int label = 0;  // +1 iff the first argument of the comparison won
};

// Finite linear Bradley-Terry environment. Immutable once built.
class World {
 public:
  const WorldSpec& spec() const { return spec_; }
  int num_prompts() const { return spec_.num_prompts; }
  int pool_size() const { return spec_.pool_size; }
  int feature_dim() const { return spec_.feature_dim; }
  int pair_dim() const { return 2 * spec_.feature_dim; }

  const Vec& theta_plus() const { return spec_.theta_plus; }
  const Vec& theta_star() const { return theta_star_; }
  const Vec& prompt_weights() const { return prompt_weights_; }
  double reward_shift() const { return reward_shift_; }

  const Vec& phi(int prompt, int response) const;
  double reward(int prompt, int response) const;

  // P*(y succ y' | x), precomputed at build time.
  double pref_prob(int prompt, int y, int yprime) const;

  friend World build_world(const WorldSpec& spec);
  friend World load_world(const std::string& path);

 private:
  void validate_ids(int prompt, int y, int yprime) const;
  void finalize();  // rewards, theta_star, preference table

  WorldSpec spec_;
  Vec theta_star_;       // [theta_plus; -theta_plus]
  Vec prompt_weights_;
  std::vector<Vec> features_;   // prompt-major, size M*K
  std::vector<double> rewards_; // shifted true rewards
  double reward_shift_ = 0.0;
  std::vector<double> pref_table_;  // M*K*K

  friend double true_gap(const World&, int, int, int);
  friend double oracle_prob(const World&, int, int, int);
};

World build_world(const WorldSpec& spec);

// <theta*, psi(x, y, y')> == r*(x,y) - r*(x,y'); antisymmetric in (y, y').
double true_gap(const World& world, int prompt, int y, int yprime);

// sigma(true_gap); complement identity oracle_prob(y,y') + oracle_prob(y',y) = 1.
double oracle_prob(const World& world, int prompt, int y, int yprime);

// Stochastic Bradley-Terry comparison. Self-comparison is a fair coin.
PreferenceDraw sample_preference(const World& world, int prompt, int y, int yprime,
                                 std::mt19937_64& rng);

// psi(x, y, y') = [phi(x,y); phi(x,y')].
PairFeature pair_feature(const World& world, int prompt, int y, int yprime);

// Versioned text fixture; round-trips features and theta bit-exactly.
void save_world(const World& world, const std::string& path);
World load_world(const std::string& path);

// Uniform direction scaled to the requested norm.
Vec random_direction(int dim, double norm, std::mt19937_64& rng);

}  // namespace depo
