#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "depo/policy.hpp"
#include "depo/rng.hpp"
#include "oracles.hpp"

using namespace depo;

namespace {

WorldSpec toy_spec(int m, int k, int d, std::uint64_t seed) {
  WorldSpec spec;
  spec.num_prompts = m;
  spec.pool_size = k;
  spec.feature_dim = d;
  spec.S = 1.0;
  spec.R_max = 2.0;
  spec.seed = seed;
  auto rng = make_stream(seed, Stream::kTheta);
  spec.theta_plus = random_direction(d, spec.S / std::sqrt(2.0), rng);
  return spec;
}

PreferenceRecord record_for(const World& world, int x, int winner, int loser, int t = 1) {
  PreferenceRecord rec;
  rec.t = t;
  rec.prompt_id = x;
  rec.winner_id = winner;
  rec.loser_id = loser;
  rec.label = +1;
  rec.psi_policy = pair_feature(world, x, winner, loser);
  rec.psi_wl = rec.psi_policy;
  return rec;
}

SoftmaxPolicy random_policy(int m, int k, std::mt19937_64& rng, double scale = 1.0) {
  SoftmaxPolicy policy(m, k);
  Mat logits(m, k);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < k; ++j) logits(i, j) = scale * standard_normal(rng);
  }
  policy.set_logits(logits);
  return policy;
}

}  // namespace

TEST_CASE("softmax rows are proper distributions") {
  auto rng = make_stream(1, Stream::kFeatures);
  const SoftmaxPolicy policy = random_policy(3, 4, rng, 2.0);
  for (int x = 0; x < 3; ++x) {
    const Vec p = policy.probs(x);
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);
    for (int k = 0; k < 4; ++k) {
      CHECK(p[k] > 0.0);
      CHECK(policy.prob(x, k) == doctest::Approx(p[k]).epsilon(1e-15));
    }
  }
}

TEST_CASE("margin: identical policies, antisymmetry, hand-computed case") {
  const SoftmaxPolicy ref = SoftmaxPolicy::uniform(2, 3);
  auto rng = make_stream(2, Stream::kFeatures);
  const SoftmaxPolicy policy = random_policy(2, 3, rng);

  for (int x = 0; x < 2; ++x) {
    for (int y = 0; y < 3; ++y) {
      for (int yp = 0; yp < 3; ++yp) {
        CHECK(std::abs(margin(ref, ref, x, y, yp)) < 1e-14);
        CHECK(std::abs(margin(policy, ref, x, y, yp) + margin(policy, ref, x, yp, y)) < 1e-12);
      }
    }
  }

  SoftmaxPolicy two(1, 2);
  Mat logits(1, 2);
  logits << 1.0, 0.0;
  two.set_logits(logits);
  const SoftmaxPolicy uniform_ref = SoftmaxPolicy::uniform(1, 2);
  CHECK(margin(two, uniform_ref, 0, 0, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("margin is invariant to logit row shifts") {
  auto rng = make_stream(3, Stream::kFeatures);
  const SoftmaxPolicy ref = random_policy(2, 3, rng);
  SoftmaxPolicy policy = random_policy(2, 3, rng);
  const double before = margin(policy, ref, 1, 0, 2);
  Mat shifted = policy.logits();
  shifted.row(1).array() += 7.5;
  policy.set_logits(shifted);
  CHECK(margin(policy, ref, 1, 0, 2) == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("dpo_loss closed forms") {
  const World world = build_world(toy_spec(2, 3, 2, 4));
  const SoftmaxPolicy ref = SoftmaxPolicy::uniform(2, 3);

  CHECK(dpo_loss(ref, ref, {}, 0.5) == 0.0);

  std::vector<PreferenceRecord> dataset;
  for (int i = 0; i < 6; ++i) dataset.push_back(record_for(world, i % 2, 0, 1));
  CHECK(dpo_loss(ref, ref, dataset, 0.5) ==
        doctest::Approx(-6.0 * std::log(2.0)).epsilon(1e-12));

  // Single record with margin 2 at beta = 1.
  SoftmaxPolicy two(1, 2);
  Mat logits(1, 2);
  logits << 2.0, 0.0;
  two.set_logits(logits);
  const SoftmaxPolicy uref = SoftmaxPolicy::uniform(1, 2);
  WorldSpec pair_spec = toy_spec(1, 2, 1, 5);
  const World pair_world = build_world(pair_spec);
  const std::vector<PreferenceRecord> one{record_for(pair_world, 0, 0, 1)};
  CHECK(dpo_loss(two, uref, one, 1.0) == doctest::Approx(-0.126928).epsilon(1e-5));
}

TEST_CASE("depo_exact_bonus: flat case, saturation and Monte-Carlo agreement") {
  const World world = build_world(toy_spec(2, 2, 2, 6));
  const SoftmaxPolicy ref = SoftmaxPolicy::uniform(2, 2);
  CovarianceState state(world.pair_dim(), 1.0);

  CHECK(depo_exact_bonus(ref, ref, ref, world, state, 0.0, 0.5) ==
        doctest::Approx(0.5).epsilon(1e-12));

  // Saturation: scale the width so the smallest per-pair argument is ~30;
  // every sigmoid is then within 1e-12 of 1 but the smallest stays below it.
  double min_radius = 1e300;
  for (int x = 0; x < 2; ++x) {
    for (int y = 0; y < 2; ++y) {
      for (int yp = 0; yp < 2; ++yp) {
        min_radius = std::min(min_radius, bonus(pair_feature(world, x, y, yp), state, 1.0));
      }
    }
  }
  REQUIRE(min_radius > 0.0);
  const double saturated = depo_exact_bonus(ref, ref, ref, world, state, 30.0 / min_radius, 0.5);
  CHECK(saturated > 0.9999);
  CHECK(saturated < 1.0);

  auto rng = make_stream(7, Stream::kFeatures);
  const SoftmaxPolicy policy = random_policy(2, 2, rng);
  const SoftmaxPolicy sampler = random_policy(2, 2, rng);
  const double width = 0.8;
  const double beta = 0.6;
  const double exact = depo_exact_bonus(policy, sampler, ref, world, state, width, beta);

  auto prompt_rng = make_stream(8, Stream::kPrompt);
  auto y_rng = make_stream(8, Stream::kPolicySample);
  auto yp_rng = make_stream(8, Stream::kSamplerSample);
  const int draws = 1000000;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int i = 0; i < draws; ++i) {
    const int x = sample_categorical(world.prompt_weights(), prompt_rng);
    const int y = sample_categorical(policy.probs(x), y_rng);
    const int yp = sample_categorical(sampler.probs(x), yp_rng);
    const double b = bonus(pair_feature(world, x, y, yp), state, width);
    const double v = sigmoid(beta * margin(policy, ref, x, y, yp) + b);
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / draws;
  const double var = (sum_sq / draws - mean * mean) / draws;
  CHECK(std::abs(mean - exact) <= 3.0 * std::sqrt(var) + 1e-12);
}

TEST_CASE("pruned objective reduces to dpo_loss at alpha = 0, bit for bit") {
  const World world = build_world(toy_spec(3, 3, 2, 9));
  const SoftmaxPolicy ref = SoftmaxPolicy::uniform(3, 3);
  auto rng = make_stream(10, Stream::kFeatures);
  const SoftmaxPolicy policy = random_policy(3, 3, rng);
  CovarianceState state(world.pair_dim(), 1.0);

  std::vector<PreferenceRecord> dataset;
  std::vector<SampledPair> pairs;
  for (int i = 0; i < 12; ++i) {
    const int x = i % 3;
    const int w = i % 2;
    dataset.push_back(record_for(world, x, w, 2));
    pairs.push_back({x, w, 2, pair_feature(world, x, w, 2)});
  }

  const double objective =
      depo_pruned_objective(policy, ref, dataset, pairs, state, 0.7, 0.0, 0.5);
  CHECK(objective == dpo_loss(policy, ref, dataset, 0.5));

  // policy = ref and width = 0: closed form -N log 2 + alpha N / 2.
  const double alpha = 1.7;
  const double at_ref = depo_pruned_objective(ref, ref, dataset, pairs, state, 0.0, alpha, 0.5);
  CHECK(at_ref ==
        doctest::Approx(-12.0 * std::log(2.0) + alpha * 12.0 * 0.5).epsilon(1e-12));
}

TEST_CASE("frozen objective closure agrees with the direct evaluation") {
  const World world = build_world(toy_spec(3, 4, 2, 11));
  const SoftmaxPolicy ref = SoftmaxPolicy::uniform(3, 4);
  auto rng = make_stream(12, Stream::kFeatures);
  CovarianceState state(world.pair_dim(), 1.0);
  for (int i = 0; i < 10; ++i) {
    state.rank_one_update(pair_feature(world, i % 3, i % 4, (i + 1) % 4));
  }

  std::vector<PreferenceRecord> dataset;
  std::vector<SampledPair> pairs;
  for (int i = 0; i < 20; ++i) {
    const int x = i % 3;
    const int y = i % 4;
    const int yp = (i + 2) % 4;
    PreferenceRecord rec = record_for(world, x, y, yp, i + 1);
    dataset.push_back(rec);
    pairs.push_back({x, y, yp, rec.psi_policy});
  }

  const double alpha = 2.5;
  const double beta = 0.7;
  const double width = 0.3;
  const PolicyObjective closure =
      make_pruned_objective(ref, dataset, pairs, state, width, alpha, beta);
  for (int trial = 0; trial < 5; ++trial) {
    const SoftmaxPolicy policy = random_policy(3, 4, rng);
    const double direct =
        depo_pruned_objective(policy, ref, dataset, pairs, state, width, alpha, beta);
    CHECK(closure(policy, nullptr) == doctest::Approx(direct).epsilon(1e-12));
  }
}

TEST_CASE("exact objective closure equals dpo_loss plus the exact bonus") {
  const World world = build_world(toy_spec(3, 3, 2, 12));
  const SoftmaxPolicy ref = SoftmaxPolicy::uniform(3, 3);
  auto rng = make_stream(13, Stream::kFeatures);
  CovarianceState state(world.pair_dim(), 1.0);
  for (int i = 0; i < 8; ++i) {
    state.rank_one_update(pair_feature(world, i % 3, i % 3, (i + 1) % 3));
  }
  std::vector<PreferenceRecord> dataset;
  for (int i = 0; i < 10; ++i) dataset.push_back(record_for(world, i % 3, i % 3, (i + 1) % 3));
  const SoftmaxPolicy sampler = random_policy(3, 3, rng);
  const double alpha = 1.3;
  const double beta = 0.4;
  const double width = 0.6;
  const PolicyObjective closure =
      make_exact_objective(ref, sampler, dataset, world, state, width, alpha, beta);
  for (int trial = 0; trial < 5; ++trial) {
    const SoftmaxPolicy policy = random_policy(3, 3, rng);
    const double expected =
        dpo_loss(policy, ref, dataset, beta) +
        alpha * depo_exact_bonus(policy, sampler, ref, world, state, width, beta);
    CHECK(closure(policy, nullptr) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("pruned objective gradient matches finite differences") {
  const World world = build_world(toy_spec(2, 3, 2, 13));
  const SoftmaxPolicy ref = SoftmaxPolicy::uniform(2, 3);
  auto rng = make_stream(14, Stream::kFeatures);
  CovarianceState state(world.pair_dim(), 1.0);
  for (int i = 0; i < 6; ++i) {
    state.rank_one_update(pair_feature(world, i % 2, i % 3, (i + 1) % 3));
  }

  std::vector<PreferenceRecord> dataset;
  std::vector<SampledPair> pairs;
  for (int i = 0; i < 15; ++i) {
    const int x = i % 2;
    const int y = i % 3;
    const int yp = (i + 1) % 3;
    PreferenceRecord rec = record_for(world, x, y, yp, i + 1);
    dataset.push_back(rec);
    pairs.push_back({x, y, yp, rec.psi_policy});
  }

  for (double alpha : {0.0, 3.0}) {
    const PolicyObjective closure =
        make_pruned_objective(ref, dataset, pairs, state, 0.4, alpha, 0.6);
    for (int trial = 0; trial < 5; ++trial) {
      const SoftmaxPolicy policy = random_policy(2, 3, rng);
      Mat grad;
      closure(policy, &grad);

      // Flatten to reuse the vector finite-difference helper.
      Vec flat(6);
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 3; ++j) flat[i * 3 + j] = policy.logits()(i, j);
      }
      auto value_of = [&](const Vec& v) {
        SoftmaxPolicy p(2, 3);
        Mat logits(2, 3);
        for (int i = 0; i < 2; ++i) {
          for (int j = 0; j < 3; ++j) logits(i, j) = v[i * 3 + j];
        }
        p.set_logits(logits);
        return closure(p, nullptr);
      };
      const Vec numeric = test::finite_difference_gradient(value_of, flat, 1e-6);
      Vec analytic(6);
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 3; ++j) analytic[i * 3 + j] = grad(i, j);
      }
      CHECK(test::max_relative_error(analytic, numeric, 1e-6) < 1e-5);
    }
  }
}

TEST_CASE("objective is invariant to logit row shifts") {
  const World world = build_world(toy_spec(2, 3, 2, 15));
  const SoftmaxPolicy ref = SoftmaxPolicy::uniform(2, 3);
  auto rng = make_stream(16, Stream::kFeatures);
  CovarianceState state(world.pair_dim(), 1.0);
  std::vector<PreferenceRecord> dataset{record_for(world, 0, 1, 2), record_for(world, 1, 0, 1)};
  std::vector<SampledPair> pairs{{0, 1, 2, pair_feature(world, 0, 1, 2)},
                                 {1, 0, 1, pair_feature(world, 1, 0, 1)}};
  const PolicyObjective closure = make_pruned_objective(ref, dataset, pairs, state, 0.2, 1.5, 0.5);

  SoftmaxPolicy policy = random_policy(2, 3, rng);
  const double before = closure(policy, nullptr);
  Mat shifted = policy.logits();
  shifted.row(0).array() += 11.0;
  shifted.row(1).array() -= 4.0;
  SoftmaxPolicy moved(2, 3);
  moved.set_logits(shifted);
  CHECK(closure(moved, nullptr) == doctest::Approx(before).epsilon(1e-12));

  // Re-centering leaves every probability unchanged.
  SoftmaxPolicy recentered = moved;
  recentered.recenter_rows();
  for (int x = 0; x < 2; ++x) {
    for (int k = 0; k < 3; ++k) {
      CHECK(recentered.prob(x, k) == doctest::Approx(moved.prob(x, k)).epsilon(1e-14));
    }
  }
}

TEST_CASE("optimize_policy: zero steps, improvement and monotonicity") {
  const World world = build_world(toy_spec(1, 2, 1, 17));
  const SoftmaxPolicy ref = SoftmaxPolicy::uniform(1, 2);
  CovarianceState state(world.pair_dim(), 1.0);

  std::vector<PreferenceRecord> dataset;
  std::vector<SampledPair> pairs;
  for (int i = 0; i < 10; ++i) {
    dataset.push_back(record_for(world, 0, 0, 1, i + 1));  // response 0 always wins
    pairs.push_back({0, 0, 1, pair_feature(world, 0, 0, 1)});
  }
  const PolicyObjective closure = make_pruned_objective(ref, dataset, pairs, state, 0.0, 0.0, 0.5);

  TrainConfig cfg;
  cfg.gd_steps = 0;
  OptimizeResult frozen = optimize_policy(ref, closure, cfg);
  CHECK(frozen.policy.logits() == ref.logits());
  CHECK(frozen.steps_taken == 0);

  cfg.gd_steps = 25;
  cfg.gd_lr = 0.5;
  const double start_value = closure(ref, nullptr);
  OptimizeResult improved = optimize_policy(ref, closure, cfg);
  CHECK(improved.objective >= start_value);
  CHECK(improved.policy.prob(0, 0) > ref.prob(0, 0));  // all wins pull mass to 0
  CHECK(improved.steps_taken > 0);
}

TEST_CASE("refresh_sampler block structure") {
  PolicyTriple triple{SoftmaxPolicy::uniform(1, 2), SoftmaxPolicy::uniform(1, 2),
                      SoftmaxPolicy::uniform(1, 2)};

  // H = 1: the sampler tracks the current policy every round.
  Mat logits(1, 2);
  logits << 0.3, -0.3;
  triple.current.set_logits(logits);
  refresh_sampler(triple, 1, 1);
  CHECK(triple.sampler.logits() == triple.current.logits());
  logits << 1.0, 2.0;
  triple.current.set_logits(logits);
  refresh_sampler(triple, 2, 1);
  CHECK(triple.sampler.logits() == triple.current.logits());

  // H = 5: constant within the block, refreshed at t = 6.
  PolicyTriple blocked{SoftmaxPolicy::uniform(1, 2), SoftmaxPolicy::uniform(1, 2),
                       SoftmaxPolicy::uniform(1, 2)};
  refresh_sampler(blocked, 1, 5);
  const Mat snapshot = blocked.sampler.logits();
  for (int t = 2; t <= 5; ++t) {
    Mat moving(1, 2);
    moving << static_cast<double>(t), 0.0;
    blocked.current.set_logits(moving);
    refresh_sampler(blocked, t, 5);
    CHECK(blocked.sampler.logits() == snapshot);
  }
  Mat at_six(1, 2);
  at_six << 6.0, 0.0;
  blocked.current.set_logits(at_six);
  refresh_sampler(blocked, 6, 5);
  CHECK(blocked.sampler.logits() == at_six);

  CHECK_THROWS_AS(refresh_sampler(blocked, 0, 5), std::invalid_argument);
}
