#include "depo/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace depo {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

void format_double(std::string& out, double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  out += buf;
}

}  // namespace

std::string generator_name(FeatureGenerator g) {
  return g == FeatureGenerator::kGaussian ? "gaussian" : "clustered";
}

FeatureGenerator generator_from_name(const std::string& name) {
  if (name == "gaussian") return FeatureGenerator::kGaussian;
  if (name == "clustered") return FeatureGenerator::kClustered;
  throw ConfigurationError("unknown feature generator '" + name +
                           "' (expected gaussian or clustered)");
}

ProjectionMatrix::ProjectionMatrix(int rows, int cols, double sparsity, std::uint64_t seed)
    : rows_(rows), cols_(cols), sparsity_(sparsity), seed_(seed) {
  if (rows <= 0 || cols <= 0) {
    throw std::invalid_argument("ProjectionMatrix: dimensions must be positive");
  }
  if (!(sparsity >= 1.0)) {
    throw std::invalid_argument("ProjectionMatrix: sparsity parameter must be >= 1");
  }
  scale_ = std::sqrt(sparsity / static_cast<double>(rows));
  auto rng = make_stream(seed, Stream::kProjection);
  const double p_nonzero = 1.0 / sparsity;
  entries_.resize(rows);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const double u = uniform01(rng);
      if (u < 0.5 * p_nonzero) {
        entries_[i].push_back({j, +1});
        ++nonzeros_;
      } else if (u < p_nonzero) {
        entries_[i].push_back({j, -1});
        ++nonzeros_;
      }
    }
  }
}

Vec ProjectionMatrix::apply(const Vec& v) const {
  if (v.size() != cols_) {
    throw std::invalid_argument("sparse_project: dimension mismatch");
  }
  Vec out = Vec::Zero(rows_);
  for (int i = 0; i < rows_; ++i) {
    double acc = 0.0;
    for (const auto& [col, sign] : entries_[i]) {
      acc += sign > 0 ? v[col] : -v[col];
    }
    out[i] = scale_ * acc;
  }
  return out;
}

Vec sparse_project(const ProjectionMatrix& p, const Vec& v) { return p.apply(v); }

std::vector<ResponseFeature> center_per_prompt(const std::vector<ResponseFeature>& features) {
  if (features.empty()) {
    throw std::invalid_argument("center_per_prompt: empty feature list");
  }
  const int prompt = features.front().prompt_id;
  Vec mean = Vec::Zero(features.front().phi.size());
  for (const auto& f : features) {
    if (f.prompt_id != prompt) {
      throw std::invalid_argument("center_per_prompt: mixed prompt ids");
    }
    mean += f.phi;
  }
  mean /= static_cast<double>(features.size());
  std::vector<ResponseFeature> out = features;
  for (auto& f : out) {
    f.phi -= mean;
  }
  return out;
}

Vec random_direction(int dim, double norm, std::mt19937_64& rng) {
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = standard_normal(rng);
  const double n = v.norm();
  if (n == 0.0) {
    v.setZero();
    v[0] = 1.0;
    return norm * v;
  }
  return (norm / n) * v;
}

void World::validate_ids(int prompt, int y, int yprime) const {
  if (prompt < 0 || prompt >= spec_.num_prompts || y < 0 || y >= spec_.pool_size ||
      yprime < 0 || yprime >= spec_.pool_size) {
    throw std::out_of_range("world: prompt/response id out of range");
  }
}

const Vec& World::phi(int prompt, int response) const {
  validate_ids(prompt, response, response);
  return features_[static_cast<std::size_t>(prompt) * spec_.pool_size + response];
}

double World::reward(int prompt, int response) const {
  validate_ids(prompt, response, response);
  return rewards_[static_cast<std::size_t>(prompt) * spec_.pool_size + response];
}

double World::pref_prob(int prompt, int y, int yprime) const {
  validate_ids(prompt, y, yprime);
  const int k = spec_.pool_size;
  return pref_table_[(static_cast<std::size_t>(prompt) * k + y) * k + yprime];
}

void World::finalize() {
  const int m = spec_.num_prompts;
  const int k = spec_.pool_size;
  const int d = spec_.feature_dim;

  theta_star_.resize(2 * d);
  theta_star_.head(d) = spec_.theta_plus;
  theta_star_.tail(d) = -spec_.theta_plus;

  if (spec_.prompt_weights.size() == 0) {
    prompt_weights_ = Vec::Constant(m, 1.0 / static_cast<double>(m));
  } else {
    prompt_weights_ = spec_.prompt_weights;
  }

  rewards_.resize(static_cast<std::size_t>(m) * k);
  double raw_min = std::numeric_limits<double>::infinity();
  double raw_max = -std::numeric_limits<double>::infinity();
  for (int x = 0; x < m; ++x) {
    for (int j = 0; j < k; ++j) {
      const double r = spec_.theta_plus.dot(features_[static_cast<std::size_t>(x) * k + j]);
      rewards_[static_cast<std::size_t>(x) * k + j] = r;
      raw_min = std::min(raw_min, r);
      raw_max = std::max(raw_max, r);
    }
  }
  reward_shift_ = -raw_min;
  const double range = raw_max - raw_min;
  if (range > spec_.R_max + 1e-12 || (range == 0.0 && spec_.R_max == 0.0)) {
    std::ostringstream msg;
    msg << "build_world: reward range " << range << " cannot be shifted into [0, "
        << spec_.R_max << "]";
    throw ConfigurationError(msg.str());
  }
  for (auto& r : rewards_) r += reward_shift_;

  pref_table_.resize(static_cast<std::size_t>(m) * k * k);
  for (int x = 0; x < m; ++x) {
    for (int y = 0; y < k; ++y) {
      for (int yp = 0; yp < k; ++yp) {
        const double gap = spec_.theta_plus.dot(features_[static_cast<std::size_t>(x) * k + y]) -
                           spec_.theta_plus.dot(features_[static_cast<std::size_t>(x) * k + yp]);
        pref_table_[(static_cast<std::size_t>(x) * k + y) * k + yp] = sigmoid(gap);
      }
    }
  }
}

World build_world(const WorldSpec& spec) {
  if (spec.num_prompts <= 0) throw ConfigurationError("build_world: num_prompts must be positive");
  if (spec.pool_size < 2) throw ConfigurationError("build_world: pool_size must be >= 2");
  if (spec.feature_dim <= 0) throw ConfigurationError("build_world: feature_dim must be positive");
  if (spec.theta_plus.size() != spec.feature_dim) {
    throw ConfigurationError("build_world: theta_plus must have dimension feature_dim");
  }
  if (spec.theta_plus.norm() > spec.S + 1e-12) {
    throw ConfigurationError("build_world: ||theta_plus|| exceeds S");
  }
  if (spec.prompt_weights.size() != 0) {
    if (spec.prompt_weights.size() != spec.num_prompts) {
      throw ConfigurationError("build_world: prompt_weights must have length num_prompts");
    }
    if (std::abs(spec.prompt_weights.sum() - 1.0) > 1e-12 || spec.prompt_weights.minCoeff() < 0.0) {
      throw ConfigurationError("build_world: prompt_weights must be a probability vector");
    }
  }

  const int m = spec.num_prompts;
  const int k = spec.pool_size;
  const int d = spec.feature_dim;
  const int gen_dim = spec.raw_dim > 0 ? spec.raw_dim : d;

  auto rng = make_stream(spec.seed, Stream::kFeatures);

  // Raw features from the configured generator.
  std::vector<Vec> raw(static_cast<std::size_t>(m) * k);
  if (spec.generator == FeatureGenerator::kGaussian) {
    for (auto& v : raw) {
      v.resize(gen_dim);
      for (int i = 0; i < gen_dim; ++i) v[i] = standard_normal(rng);
    }
  } else {
    // Low-diversity regime: all features sit near +/- one fixed direction.
    Vec axis = random_direction(gen_dim, 1.0, rng);
    const double noise = 0.05;
    for (auto& v : raw) {
      const double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
      v = sign * axis;
      for (int i = 0; i < gen_dim; ++i) v[i] += noise * standard_normal(rng);
    }
  }

  World world;
  world.spec_ = spec;
  world.features_.resize(raw.size());

  if (spec.raw_dim > 0) {
    const double sparsity = std::sqrt(static_cast<double>(spec.raw_dim));
    ProjectionMatrix proj(d, spec.raw_dim, sparsity, spec.seed);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      world.features_[i] = proj.apply(raw[i]);
    }
  } else {
    world.features_ = std::move(raw);
  }

  // Per-prompt mean-centering, then one global rescale so the largest feature
  // norm is exactly 1/sqrt(2) and every psi satisfies ||psi||_2 <= 1.
  for (int x = 0; x < m; ++x) {
    std::vector<ResponseFeature> group;
    group.reserve(k);
    for (int j = 0; j < k; ++j) {
      group.push_back({x, j, world.features_[static_cast<std::size_t>(x) * k + j]});
    }
    group = center_per_prompt(group);
    for (int j = 0; j < k; ++j) {
      world.features_[static_cast<std::size_t>(x) * k + j] = group[j].phi;
    }
  }
  double max_norm = 0.0;
  for (const auto& v : world.features_) max_norm = std::max(max_norm, v.norm());
  if (max_norm > 0.0) {
    const double scale = kInvSqrt2 / max_norm;
    for (auto& v : world.features_) v *= scale;
  }

  world.finalize();
  return world;
}

double true_gap(const World& world, int prompt, int y, int yprime) {
  world.validate_ids(prompt, y, yprime);
  const int k = world.spec_.pool_size;
  const Vec& a = world.features_[static_cast<std::size_t>(prompt) * k + y];
  const Vec& b = world.features_[static_cast<std::size_t>(prompt) * k + yprime];
  return world.spec_.theta_plus.dot(a) - world.spec_.theta_plus.dot(b);
}

double oracle_prob(const World& world, int prompt, int y, int yprime) {
  return sigmoid(true_gap(world, prompt, y, yprime));
}

PreferenceDraw sample_preference(const World& world, int prompt, int y, int yprime,
                                 std::mt19937_64& rng) {
  const double p = world.pref_prob(prompt, y, yprime);
  const double u = uniform01(rng);
  PreferenceDraw draw;
  if (u < p) {
    draw.winner = y;
    draw.loser = yprime;
    draw.label = +1;
  } else {
    draw.winner = yprime;
    draw.loser = y;
    draw.label = -1;
  }
  return draw;
}

PairFeature pair_feature(const World& world, int prompt, int y, int yprime) {
  const int d = world.feature_dim();
  PairFeature psi(2 * d);
  psi.head(d) = world.phi(prompt, y);
  psi.tail(d) = world.phi(prompt, yprime);
  return psi;
}

void save_world(const World& world, const std::string& path) {
  const WorldSpec& spec = world.spec();
  std::string out;
  out += "DEPO-WORLD v1\n";
  out += "num_prompts " + std::to_string(spec.num_prompts) + "\n";
  out += "pool_size " + std::to_string(spec.pool_size) + "\n";
  out += "feature_dim " + std::to_string(spec.feature_dim) + "\n";
  out += "raw_dim " + std::to_string(spec.raw_dim) + "\n";
  out += "seed " + std::to_string(spec.seed) + "\n";
  out += "generator " + generator_name(spec.generator) + "\n";
  out += "S ";
  format_double(out, spec.S);
  out += "\nR_max ";
  format_double(out, spec.R_max);
  out += "\nreward_shift ";
  format_double(out, world.reward_shift());
  out += "\ntheta_plus";
  for (int i = 0; i < spec.feature_dim; ++i) {
    out += ' ';
    format_double(out, spec.theta_plus[i]);
  }
  out += "\nprompt_weights";
  for (int i = 0; i < spec.num_prompts; ++i) {
    out += ' ';
    format_double(out, world.prompt_weights()[i]);
  }
  out += "\n";
  for (int x = 0; x < spec.num_prompts; ++x) {
    for (int j = 0; j < spec.pool_size; ++j) {
      out += "feature " + std::to_string(x) + " " + std::to_string(j);
      const Vec& phi = world.phi(x, j);
      for (int i = 0; i < spec.feature_dim; ++i) {
        out += ' ';
        format_double(out, phi[i]);
      }
      out += "\n";
    }
  }
  out += "end\n";

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_world: cannot open " + path);
  f << out;
  if (!f) throw std::runtime_error("save_world: write failed for " + path);
}

World load_world(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_world: cannot open " + path);
  std::string header;
  std::getline(f, header);
  if (header != "DEPO-WORLD v1") {
    throw std::runtime_error("load_world: version mismatch, expected 'DEPO-WORLD v1', got '" +
                             header + "'");
  }

  World world;
  WorldSpec& spec = world.spec_;
  double stored_shift = 0.0;
  std::string key;
  while (f >> key) {
    if (key == "end") break;
    if (key == "num_prompts") f >> spec.num_prompts;
    else if (key == "pool_size") f >> spec.pool_size;
    else if (key == "feature_dim") f >> spec.feature_dim;
    else if (key == "raw_dim") f >> spec.raw_dim;
    else if (key == "seed") f >> spec.seed;
    else if (key == "generator") {
      std::string name;
      f >> name;
      spec.generator = generator_from_name(name);
    } else if (key == "S") f >> spec.S;
    else if (key == "R_max") f >> spec.R_max;
    else if (key == "reward_shift") f >> stored_shift;
    else if (key == "theta_plus") {
      spec.theta_plus.resize(spec.feature_dim);
      for (int i = 0; i < spec.feature_dim; ++i) f >> spec.theta_plus[i];
    } else if (key == "prompt_weights") {
      spec.prompt_weights.resize(spec.num_prompts);
      for (int i = 0; i < spec.num_prompts; ++i) f >> spec.prompt_weights[i];
    } else if (key == "feature") {
      if (world.features_.empty()) {
        world.features_.resize(static_cast<std::size_t>(spec.num_prompts) * spec.pool_size);
      }
      int x = 0, j = 0;
      f >> x >> j;
      Vec phi(spec.feature_dim);
      for (int i = 0; i < spec.feature_dim; ++i) f >> phi[i];
      world.features_.at(static_cast<std::size_t>(x) * spec.pool_size + j) = phi;
    } else {
      throw std::runtime_error("load_world: unexpected key '" + key + "'");
    }
  }
  if (!f) throw std::runtime_error("load_world: truncated file " + path);

  world.finalize();
  // finalize() re-derives the shift from the stored features; the stored value
  // is the authoritative one and must agree.
  if (std::abs(world.reward_shift_ - stored_shift) > 1e-9) {
    throw std::runtime_error("load_world: reward shift mismatch, file corrupt");
  }
  world.reward_shift_ = stored_shift;
  return world;
}

}  // namespace depo
