#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "calikit/calikit.hpp"
#include "oracles.hpp"
#include "util.hpp"

using calikit::BinSpec;
using calikit::CalibError;
using calikit::ProbMatrix;

namespace {

// random stochastic rows plus labels, optionally drawn from the rows
calikit::CalibrationDataset random_ds(std::size_t m, std::size_t k,
                                      std::uint64_t seed) {
  calikit::Rng rng(seed);
  calikit::Matrix raw(m, k);
  calikit::LabelVector labels(m);
  for (std::size_t i = 0; i < m; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      raw(i, j) = 0.01 + rng.uniform01();
      sum += raw(i, j);
    }
    for (std::size_t j = 0; j < k; ++j) raw(i, j) /= sum;
    labels[i] = static_cast<int>(rng.below(k));
  }
  return calikit::validate_dataset(raw, labels);
}

}  // namespace

TEST_CASE("log loss matches frozen values and clamps zeros") {
  ProbMatrix p = testutil::probs(1, 2, {0.75, 0.25});
  REQUIRE(calikit::nll(p, {0}) ==
          Catch::Approx(0.2876820724517809).margin(1e-16));

  ProbMatrix uniform = testutil::probs(1, 3, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  REQUIRE(calikit::nll(uniform, {2}) ==
          Catch::Approx(1.0986122886681098).margin(1e-15));

  ProbMatrix hole = testutil::probs(1, 2, {0.0, 1.0});
  REQUIRE(calikit::nll(hole, {0}) ==
          Catch::Approx(-std::log(1e-12)).margin(1e-12));
  REQUIRE_THROWS_AS(calikit::nll(p, {0, 1}), CalibError);
}

TEST_CASE("quadratic score averages over every entry") {
  ProbMatrix p = testutil::probs(1, 2, {0.75, 0.25});
  REQUIRE(calikit::brier(p, {0}) == Catch::Approx(0.0625).margin(1e-16));
  ProbMatrix onehot = testutil::probs(2, 3, {1, 0, 0, 0, 1, 0});
  REQUIRE(calikit::brier(onehot, {0, 1}) == 0.0);
}

TEST_CASE("confidence calibration error on a hand-binned example") {
  // two samples at confidence 0.9 (one hit), two at 0.6 (both hits):
  // bins contribute 0.5*|0.5-0.9| + 0.5*|1.0-0.6| = 0.4
  ProbMatrix p = testutil::probs(4, 2, {0.9, 0.1, 0.9, 0.1, 0.6, 0.4, 0.6, 0.4});
  calikit::LabelVector labels = {0, 1, 0, 0};
  REQUIRE(calikit::conf_ece(p, labels) == Catch::Approx(0.4).margin(1e-12));
}

TEST_CASE("confidence ties resolve to the lowest class index") {
  ProbMatrix p = testutil::probs(1, 3, {0.4, 0.4, 0.2});
  // class 0 is the prediction, so label 1 counts as a miss:
  // |acc - conf| = |0 - 0.4|, not |1 - 0.4|
  REQUIRE(calikit::conf_ece(p, {1}) == Catch::Approx(0.4).margin(1e-12));
  REQUIRE(calikit::conf_ece(p, {0}) == Catch::Approx(0.6).margin(1e-12));
}

TEST_CASE("reliability table counts and moments are consistent") {
  calikit::CalibrationDataset ds = random_ds(500, 4, 81);
  calikit::ReliabilityTable table = calikit::reliability_table(ds.probs, ds.labels);
  REQUIRE(table.bins.size() == 15);
  std::size_t total = 0;
  for (const calikit::ReliabilityBin& b : table.bins) {
    total += b.count;
    if (b.count == 0) {
      REQUIRE_FALSE(b.mean_confidence);
      REQUIRE_FALSE(b.accuracy);
    } else {
      REQUIRE(b.mean_confidence);
      REQUIRE(*b.mean_confidence >= 0.0);
      REQUIRE(*b.mean_confidence <= 1.0);
      REQUIRE(*b.accuracy >= 0.0);
      REQUIRE(*b.accuracy <= 1.0);
    }
  }
  REQUIRE(total == 500);
  // the scalar metric is the table's own summary
  REQUIRE(calikit::conf_ece(ds.probs, ds.labels) ==
          Catch::Approx(table.ece()).margin(0.0));
}

TEST_CASE("binned metrics agree with naive double-loop implementations") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    calikit::CalibrationDataset ds = random_ds(20 + 7 * seed, 2 + seed % 9, seed);
    BinSpec spec;
    REQUIRE(calikit::nll(ds.probs, ds.labels) ==
            Catch::Approx(oracles::naive_nll(ds.probs, ds.labels)).margin(1e-12));
    REQUIRE(calikit::brier(ds.probs, ds.labels) ==
            Catch::Approx(oracles::naive_brier(ds.probs, ds.labels)).margin(1e-12));
    REQUIRE(calikit::conf_ece(ds.probs, ds.labels, spec) ==
            Catch::Approx(oracles::naive_conf_ece(ds.probs, ds.labels, 15))
                .margin(1e-12));
    REQUIRE(calikit::cw_ece(ds.probs, ds.labels, spec) ==
            Catch::Approx(oracles::naive_cw_ece(ds.probs, ds.labels, 15))
                .margin(1e-12));
    double thr = 1.0 / static_cast<double>(ds.classes());
    REQUIRE(calikit::tece(ds.probs, ds.labels, spec) ==
            Catch::Approx(oracles::naive_tece(ds.probs, ds.labels, 15, thr))
                .margin(1e-12));
  }
}

TEST_CASE("thresholded error on a two-survivor example") {
  // default threshold 1/2: class 0 keeps 0.9 (hit) and 0.6 (miss), class 1
  // keeps nothing; two equal-mass bins give 0.5*0.6 + 0.5*0.1 = 0.35
  ProbMatrix p = testutil::probs(2, 2, {0.9, 0.1, 0.6, 0.4});
  REQUIRE(calikit::tece(p, {0, 1}) == Catch::Approx(0.35).margin(1e-12));
}

TEST_CASE("thresholded error with custom threshold and empty survivors") {
  ProbMatrix p = testutil::probs(1, 2, {0.5, 0.5});
  REQUIRE(calikit::tece(p, {0}) == 0.0);  // nothing exceeds 1/2, warns

  BinSpec spec;
  spec.threshold = 0.4;
  // both entries survive their class at threshold 0.4
  REQUIRE(calikit::tece(p, {0}, spec) ==
          Catch::Approx(oracles::naive_tece(p, {0}, 15, 0.4)).margin(1e-12));
}

TEST_CASE("perfect one-hot predictions have zero error everywhere") {
  ProbMatrix p = testutil::probs(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  calikit::LabelVector labels = {0, 1, 2};
  REQUIRE(calikit::conf_ece(p, labels) == 0.0);
  REQUIRE(calikit::cw_ece(p, labels) == 0.0);
  REQUIRE(calikit::tece(p, labels) == 0.0);
  REQUIRE(calikit::nll(p, labels) <= 1e-11);
  REQUIRE(calikit::brier(p, labels) == 0.0);
}

TEST_CASE("resampling p-value is deterministic and bounded") {
  calikit::CalibrationDataset ds = random_ds(200, 3, 7);
  double p1 = calikit::consistency_pvalue(ds.probs, ds.labels, 99, 5);
  double p2 = calikit::consistency_pvalue(ds.probs, ds.labels, 99, 5);
  REQUIRE(p1 == p2);
  REQUIRE(p1 >= 1.0 / 100.0);
  REQUIRE(p1 <= 1.0);
  REQUIRE_THROWS_AS(calikit::consistency_pvalue(ds.probs, ds.labels, 0, 1),
                    CalibError);
}

TEST_CASE("resampling flags overconfident scores but not calibrated ones") {
  calikit::CalibrationDataset sharp = calikit::gen_calibrated({2000, 5, {}, 0.25, 19});
  double p_sharp = calikit::consistency_pvalue(sharp.probs, sharp.labels, 99, 2);
  REQUIRE(p_sharp <= 0.05);

  calikit::CalibrationDataset calib = calikit::gen_calibrated({2000, 5, {}, 1.0, 19});
  double p_calib = calikit::consistency_pvalue(calib.probs, calib.labels, 99, 2);
  REQUIRE(p_calib > 0.05);
}

TEST_CASE("custom statistics plug into the resampling test") {
  calikit::CalibrationDataset ds = calikit::gen_calibrated({400, 4, {}, 0.25, 3});
  double p = calikit::consistency_pvalue(
      ds.probs, ds.labels, 49, 11,
      [](const ProbMatrix& q, const calikit::LabelVector& y) {
        return calikit::nll(q, y);
      });
  REQUIRE(p >= 1.0 / 50.0);
  REQUIRE(p <= 1.0);
}
