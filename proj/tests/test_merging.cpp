#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "segfit/estimators.hpp"
#include "segfit/merging.hpp"
#include "segfit/synth.hpp"

using namespace segfit;

namespace {

std::vector<CandidatePair> with_errors(const std::vector<double>& errors) {
  std::vector<CandidatePair> c;
  for (std::size_t u = 0; u < errors.size(); ++u) c.push_back({2 * u, 2 * u + 1, {2 * u, 2 * u + 2}, errors[u]});
  return c;
}

DataSet noiseless_line(std::size_t n, std::size_t d, std::uint64_t seed) {
  SplitMix64 rng(seed);
  return oracle::random_dataset(rng, n, d, 0.0);
}

}  // namespace

TEST(PairCandidates, EvenOddAndSingle) {
  const auto four = pair_candidates(Partition({0, 1, 2, 3, 4}));
  EXPECT_EQ(four.pairs.size(), 2u);
  EXPECT_FALSE(four.carryover);
  EXPECT_EQ(four.pairs[1].merged, (Interval{2, 4}));

  const auto five = pair_candidates(Partition({0, 2, 3, 5, 6, 9}));
  EXPECT_EQ(five.pairs.size(), 2u);
  ASSERT_TRUE(five.carryover);
  EXPECT_EQ(*five.carryover, 4u);
  EXPECT_EQ(five.pairs[0].merged, (Interval{0, 3}));
  EXPECT_EQ(five.pairs[1].left, 2u);
  EXPECT_EQ(five.pairs[1].right, 3u);

  const auto one = pair_candidates(Partition::single(7));
  EXPECT_TRUE(one.pairs.empty());
  ASSERT_TRUE(one.carryover);
  EXPECT_EQ(*one.carryover, 0u);
}

TEST(SelectTopErrors, KeepsEverythingWhenCountIsLarge) {
  const auto c = with_errors({1, 2, 3});
  const auto sel = select_top_errors(c, 3);
  EXPECT_EQ(sel.kept, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_TRUE(sel.merged.empty());
  EXPECT_EQ(select_top_errors(c, 10).kept.size(), 3u);
}

TEST(SelectTopErrors, TiesBrokenByStart) {
  const auto c = with_errors({5, 3, 5});
  const auto sel = select_top_errors(c, 2);
  EXPECT_EQ(sel.kept, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(sel.merged, (std::vector<std::size_t>{1}));
  const auto tie = with_errors({4, 4, 4, 4});
  EXPECT_EQ(select_top_errors(tie, 2).kept, (std::vector<std::size_t>{0, 1}));
}

TEST(SelectTopErrors, MatchesFullSort) {
  SplitMix64 rng(100);
  std::vector<double> errors(100);
  for (double& e : errors) e = std::round(rng.uniform(-50.0, 50.0));  // rounding forces ties
  const auto c = with_errors(errors);
  const auto sel = select_top_errors(c, 17);
  std::vector<std::size_t> order(100);
  for (std::size_t i = 0; i < 100; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return errors[a] > errors[b]; });
  std::vector<std::size_t> top(order.begin(), order.begin() + 17);
  std::sort(top.begin(), top.end());
  EXPECT_EQ(sel.kept, top);
  EXPECT_EQ(sel.kept.size() + sel.merged.size(), 100u);
}

TEST(MergeConfig, ThresholdsAndValidation) {
  MergeConfig cfg{3, 3.0, 0.0, 0.0};
  EXPECT_EQ(cfg.keep_count(), 4u);       // (1 + 1/3) 3 = 4 exactly
  EXPECT_EQ(cfg.stop_threshold(), 8u);   // (2 + 2/3) 3 = 8 exactly
  cfg = {5, 2.0, 1.5, 0.0};
  EXPECT_EQ(cfg.keep_count(), 8u);       // 7.5
  EXPECT_EQ(cfg.stop_threshold(), 17u);  // 16.5
  cfg.tau = std::numeric_limits<double>::infinity();
  EXPECT_EQ(cfg.keep_count(), 5u);
  EXPECT_THROW((MergeConfig{0, 1.0, 2.0, 0.0}.validate()), ParameterError);
  EXPECT_THROW((MergeConfig{1, 0.0, 2.0, 0.0}.validate()), ParameterError);
  EXPECT_THROW((MergeConfig{1, 1.0, -1.0, 0.0}.validate()), ParameterError);
  EXPECT_THROW((MergeConfig{1, 1.0, 2.0, -1.0}.validate()), ParameterError);
}

TEST(GreedyMerge, SmallInputSkipsTheLoop) {
  const auto ds = noiseless_line(6, 1, 1);
  const auto r = greedy_merge(ds, {1, 1.0, 2.0, 0.0});  // threshold 6
  EXPECT_EQ(r.iterations, 0u);
  EXPECT_EQ(r.model.piece_count(), 6u);
}

TEST(GreedyMerge, NoiselessLineMergesFreely) {
  const auto ds = noiseless_line(500, 3, 2);
  const auto r = greedy_merge(ds, {1, 1.0, 2.0, 0.0});
  EXPECT_LE(r.sse, 1e-18 * oracle::squared_norm(ds.y()));
  EXPECT_LE(r.model.piece_count(), 6u);
}

TEST(GreedyMerge, IterationBound) {
  for (std::size_t n : {100u, 1000u, 4097u}) {
    const auto ds = noiseless_line(n, 1, n);
    for (double gamma : {1.0, 2.0, 7.0}) {
      const auto r = greedy_merge(ds, {2, 1.0, gamma, 0.0});
      const auto bound = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(n) / gamma))) + 1;
      EXPECT_LE(r.iterations, bound) << "n=" << n << " gamma=" << gamma;
    }
  }
}

TEST(GreedyMerge, PieceCountBoundHoldsForRandomConfigs) {
  SplitMix64 rng(7);
  for (int rep = 0; rep < 40; ++rep) {
    const std::size_t n = 2 + rng.uniform_int(0, 600);
    const auto ds = oracle::random_dataset(rng, n, 1 + rng.uniform_int(0, 3));
    MergeConfig cfg{static_cast<std::size_t>(1 + rng.uniform_int(0, 6)), rng.uniform(0.2, 5.0), rng.uniform(0.0, 4.0),
                    rng.uniform(0.0, 2.0)};
    const auto r = greedy_merge(ds, cfg);
    EXPECT_LE(r.model.piece_count(), cfg.stop_threshold());
    EXPECT_EQ(r.model.partition().n(), n);
  }
}

TEST(GreedyMerge, CriterionSignWithZeroNoise) {
  SplitMix64 rng(8);
  const auto ds = oracle::random_dataset(rng, 64, 2);
  std::vector<detail::Piece> pieces = detail::singleton_pieces(ds);
  std::vector<NormalEquations> scratch;
  const auto pairing = detail::score_pairs(ds, pieces, scratch, [](double sse, std::size_t) { return sse; });
  for (const auto& c : pairing.pairs) EXPECT_GE(c.error, 0.0);
  const auto shifted = detail::score_pairs(ds, pieces, scratch, [](double sse, std::size_t size) {
    return sse - 10.0 * static_cast<double>(size);
  });
  for (const auto& c : shifted.pairs) EXPECT_LT(c.error, 0.0);
}

TEST(GreedyMerge, Deterministic) {
  SplitMix64 rng(9);
  const auto ds = oracle::random_dataset(rng, 300, 2);
  const MergeConfig cfg{4, 1.0, 2.0, 1.0};
  const auto a = greedy_merge(ds, cfg);
  const auto b = greedy_merge(ds, cfg);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.sse, b.sse);
}

TEST(BucketMerge, SaturatedBucketMergesNothing) {
  // Eight singletons pair into four length-2 candidates in one bucket; with
  // k + 1 >= 4 all of them are kept, so only the forced merge happens.
  const auto ds = noiseless_line(8, 1, 3);
  std::vector<detail::Piece> pieces = detail::singleton_pieces(ds);
  std::vector<NormalEquations> scratch;
  const auto pairing = detail::score_pairs(ds, pieces, scratch, [](double sse, std::size_t size) {
    return sse / static_cast<double>(size);
  });
  const auto sel = select_top_errors(pairing.pairs, 4);
  EXPECT_TRUE(sel.merged.empty());
}

TEST(BucketMerge, NoiselessSinglePiece) {
  const auto ds = noiseless_line(1000, 2, 4);
  const auto r = bucket_greedy_merge(ds, 1, 0.0);
  EXPECT_LE(r.sse, 1e-18 * oracle::squared_norm(ds.y()));
}

TEST(BucketMerge, BucketIndexIsFloorLog2) {
  EXPECT_EQ(bucket_of(1), 0u);
  EXPECT_EQ(bucket_of(2), 1u);
  EXPECT_EQ(bucket_of(3), 1u);
  EXPECT_EQ(bucket_of(4), 2u);
  EXPECT_EQ(bucket_of(1023), 9u);
  EXPECT_EQ(bucket_of(1024), 10u);
}

TEST(BucketMerge, PieceCountBoundHoldsForRandomConfigs) {
  SplitMix64 rng(10);
  for (int rep = 0; rep < 40; ++rep) {
    const std::size_t n = 2 + rng.uniform_int(0, 2000);
    const auto ds = oracle::random_dataset(rng, n, 1 + rng.uniform_int(0, 2));
    const std::size_t k = 1 + rng.uniform_int(0, 5);
    const double gamma = rng.uniform(0.0, 3.0);
    const auto r = bucket_greedy_merge(ds, k, gamma);
    const double budget = (2.0 * static_cast<double>(k + 1) + gamma) * std::ceil(std::log2(static_cast<double>(n)));
    EXPECT_LE(static_cast<double>(r.model.piece_count()), std::max(budget, 1.0)) << "n=" << n << " k=" << k;
  }
}

TEST(BucketMerge, NeedsTwoPoints) {
  const DataSet one(Matrix(1, 1, 1.0), {1.0});
  EXPECT_THROW(bucket_greedy_merge(one, 1, 0.0), ParameterError);
}

TEST(Postprocess, ExactArityIsARefit) {
  SplitMix64 rng(11);
  const auto ds = oracle::random_dataset(rng, 40, 2);
  const Partition coarse({0, 5, 10, 20, 30, 40});
  const auto r = postprocess(ds, coarse, 2);
  EXPECT_EQ(r.model.partition(), coarse);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(Postprocess, TooFewPiecesWarns) {
  SplitMix64 rng(12);
  const auto ds = oracle::random_dataset(rng, 40, 2);
  const Partition coarse({0, 20, 40});
  const auto r = postprocess(ds, coarse, 2);
  EXPECT_EQ(r.model.partition(), coarse);
  EXPECT_EQ(r.warnings.size(), 1u);
}

TEST(Postprocess, RealizableRestrictionIsExact) {
  const std::size_t k = 3;
  SyntheticInstance inst = generate({ScenarioKind::kPiecewiseLinear, k, 2048, 2, 0.0, 13, 0.0});
  const auto& ds = inst.dataset;
  const auto coarse = bucket_greedy_merge(ds, k, 0.0);
  const auto cuts = coarse.model.partition().interior();
  for (std::size_t b : inst.truth_model.partition().interior())
    ASSERT_TRUE(std::find(cuts.begin(), cuts.end(), b) != cuts.end());
  const auto r = postprocess(ds, coarse.model.partition(), k);
  EXPECT_EQ(r.model.piece_count(), 2 * k + 1);
  EXPECT_LE(r.sse, 1e-15 * oracle::squared_norm(ds.y()));
}

TEST(Postprocess, MatchesExhaustiveSubsetSearch) {
  SplitMix64 rng(14);
  for (int rep = 0; rep < 5; ++rep) {
    const auto ds = oracle::random_dataset(rng, 60, 2);
    std::vector<std::size_t> bounds{0};
    for (std::size_t p = 1; p < 12; ++p) bounds.push_back(5 * p + static_cast<std::size_t>(rng.uniform_int(-2, 2)));
    bounds.push_back(60);
    const Partition coarse(bounds);
    const auto r = postprocess(ds, coarse, 2);
    EXPECT_EQ(r.model.piece_count(), 5u);
    EXPECT_LE(oracle::rel_diff(r.sse, oracle::best_over_cuts(ds, coarse.interior(), 5)), 1e-8);
  }
}

TEST(Postprocess, BucketPipelineHasExactly2kPlus1Pieces) {
  SplitMix64 rng(15);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 200 + rng.uniform_int(0, 3000);
    const std::size_t k = 1 + rng.uniform_int(0, 6);
    const auto ds = oracle::random_dataset(rng, n, 1 + rng.uniform_int(0, 2));
    EXPECT_EQ(bucket_merge_postprocessed(ds, k, rng.uniform(0.0, 3.0)).model.piece_count(), 2 * k + 1);
  }
}

TEST(NoiseEstimate, RecoversVarianceOfConstantSignal) {
  const auto inst = generate({ScenarioKind::kPiecewiseConstant, 1, 20000, 1, 2.0, 5, 0.0});
  EXPECT_NEAR(estimate_noise_variance(inst.dataset), 4.0, 0.2);
}
