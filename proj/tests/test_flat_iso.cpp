#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "calikit/calikit.hpp"
#include "util.hpp"

using calikit::BlockStructure;
using calikit::CalibError;
using calikit::ErrorKind;

TEST_CASE("flatten pairs every entry with its one-vs-rest target") {
  calikit::CalibrationDataset ds =
      testutil::dataset(2, 2, {0.7, 0.3, 0.6, 0.4}, {1, 0});
  calikit::FlattenedSet fs = calikit::flatten(ds);
  REQUIRE(fs.x == std::vector<double>{0.7, 0.3, 0.6, 0.4});
  REQUIRE(fs.y == std::vector<std::uint8_t>{0, 1, 1, 0});
  REQUIRE(fs.sample == std::vector<std::uint32_t>{0, 0, 1, 1});
  REQUIRE(fs.cls == std::vector<std::uint32_t>{0, 1, 0, 1});
}

TEST_CASE("shared isotonic map fits the flattened set") {
  calikit::CalibrationDataset ds =
      testutil::dataset(2, 2, {0.7, 0.3, 0.6, 0.4}, {1, 0});
  calikit::FIRModel model = calikit::fit_fir(ds);
  for (double x : {0.3, 0.4, 0.6, 0.7})
    REQUIRE(model.fn.eval(x) == Catch::Approx(0.5).margin(1e-15));

  calikit::ProbMatrix out = calikit::predict_fir(model, ds.probs);
  for (double v : out.v) REQUIRE(v == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("prediction renormalizes rows and rejects wrong widths") {
  calikit::CalibrationDataset ds = calikit::gen_calibrated({100, 3, {}, 1.0, 4});
  calikit::FIRModel model = calikit::fit_fir(ds);
  calikit::ProbMatrix out = calikit::predict_fir(model, ds.probs);
  for (std::size_t i = 0; i < out.rows; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < out.cols; ++j) sum += out(i, j);
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
  }
  calikit::ProbMatrix wrong(2, 4);
  REQUIRE_THROWS_AS(calikit::predict_fir(model, wrong), CalibError);
}

TEST_CASE("normalized likelihood matches a single-row hand computation") {
  calikit::CalibrationDataset ds = testutil::dataset(1, 2, {0.7, 0.3}, {0});
  BlockStructure bs;
  bs.xs = {0.3, 0.7};
  bs.multiplicity = {1, 1};
  bs.starts = {0, 1, 2};
  bs.fits = {0.3, 0.7};
  calikit::SufficientStats st = calikit::build_sufficient_stats(ds, bs);
  // L = 1 * ln 0.7 - ln(0.3 + 0.7)
  double L = calikit::nafir_objective(bs.fits, st);
  REQUIRE(L == Catch::Approx(-0.35667494393873245).margin(1e-15));
  REQUIRE_THROWS_AS(calikit::nafir_objective({0.3, 0.0}, st), CalibError);
  REQUIRE_THROWS_AS(calikit::nafir_objective({0.3}, st), CalibError);
}

TEST_CASE("normalized likelihood is scale invariant") {
  calikit::CalibrationDataset ds = calikit::gen_calibrated({60, 4, {}, 0.5, 9});
  calikit::NAFIRModel m = calikit::fit_nafir(ds, {1e-3, 200.0, 500, 0, 0, 0}, 1);
  calikit::SufficientStats st = calikit::build_sufficient_stats(ds, m.blocks);
  double L1 = calikit::nafir_objective(m.blocks.fits, st);
  std::vector<double> scaled = m.blocks.fits;
  for (double& g : scaled) g *= 3.7;
  double L2 = calikit::nafir_objective(scaled, st);
  REQUIRE(L2 == Catch::Approx(L1).margin(1e-9));
}

TEST_CASE("annealing never loses to its floored start and tracks drift") {
  calikit::CalibrationDataset ds = calikit::gen_calibrated({300, 4, {}, 0.5, 21});
  calikit::NAFIRModel m = calikit::fit_nafir(ds, {}, 3);
  REQUIRE(m.objective >= m.initial_objective);
  REQUIRE(m.incremental_drift <= 1e-9);
  REQUIRE(m.iterations_run <= m.opts.num_iterations);
  const std::vector<double>& fits = m.blocks.fits;
  for (std::size_t b = 0; b + 1 < fits.size(); ++b)
    REQUIRE(fits[b] <= fits[b + 1] + 1e-15);
  for (double g : fits) REQUIRE(g > 0.0);
}

TEST_CASE("annealing is deterministic in the seed") {
  calikit::CalibrationDataset ds = calikit::gen_calibrated({150, 3, {}, 0.5, 33});
  calikit::NafirOptions opts;
  opts.num_iterations = 20000;
  calikit::NAFIRModel a = calikit::fit_nafir(ds, opts, 5);
  calikit::NAFIRModel b = calikit::fit_nafir(ds, opts, 5);
  REQUIRE(a.blocks.fits == b.blocks.fits);
  REQUIRE(a.objective == b.objective);
  REQUIRE(a.iterations_run == b.iterations_run);
}

TEST_CASE("annealing beats the flat fit on distorted data") {
  calikit::CalibrationDataset ds = calikit::gen_calibrated({800, 5, {}, 0.5, 77});
  calikit::FIRModel fir = calikit::fit_fir(ds);
  calikit::NAFIRModel na = calikit::fit_nafir(ds, {}, 7);
  double nll_fir = calikit::nll(calikit::predict_fir(fir, ds.probs), ds.labels);
  double nll_na = calikit::nll(calikit::predict_nafir(na, ds.probs), ds.labels);
  REQUIRE(nll_na <= nll_fir);
}

TEST_CASE("block splitting reaches the requested count") {
  BlockStructure bs;
  for (int i = 0; i < 10; ++i) {
    bs.xs.push_back(0.1 * (i + 1));
    bs.multiplicity.push_back(1);
  }
  bs.starts = {0, 10};
  bs.fits = {0.5};

  BlockStructure out = calikit::split_blocks(bs, 3, 0);
  REQUIRE(out.num_blocks() == 3);
  REQUIRE(out.block_population(0) == 4);  // remainder lands in front
  REQUIRE(out.block_population(1) == 3);
  REQUIRE(out.block_population(2) == 3);
  for (double f : out.fits) REQUIRE(f == 0.5);  // fits are inherited
  REQUIRE(out.starts.back() == bs.starts.back());

  BlockStructure same = calikit::split_blocks(bs, 0, 4);
  REQUIRE(same.starts == bs.starts);  // min_blocks == 0 is the identity
}

TEST_CASE("block splitting respects the size threshold") {
  BlockStructure bs;
  for (int i = 0; i < 10; ++i) {
    bs.xs.push_back(0.1 * (i + 1));
    bs.multiplicity.push_back(1);
  }
  bs.starts = {0, 10};
  bs.fits = {0.5};
  // 10 entries split into halves of 5, then nothing else reaches 2 * 5
  try {
    calikit::split_blocks(bs, 3, 5);
    FAIL("expected ThresholdLargerThanBlock");
  } catch (const CalibError& e) {
    REQUIRE(e.kind() == ErrorKind::ThresholdLargerThanBlock);
  }
}

TEST_CASE("pooled ties cannot be split apart") {
  BlockStructure bs;
  bs.xs = {0.5};
  bs.multiplicity = {10};
  bs.starts = {0, 1};
  bs.fits = {0.4};
  REQUIRE_THROWS_AS(calikit::split_blocks(bs, 2, 0), CalibError);
}

TEST_CASE("forced finer blocks carry through the whole fit") {
  calikit::CalibrationDataset ds = calikit::gen_calibrated({50, 4, {}, 0.5, 13});
  calikit::NafirOptions opts;
  opts.num_iterations = 2000;
  opts.min_blocks = 20;
  calikit::NAFIRModel m = calikit::fit_nafir(ds, opts, 2);
  REQUIRE(m.blocks.num_blocks() >= 20);
  const std::vector<double>& fits = m.blocks.fits;
  for (std::size_t b = 0; b + 1 < fits.size(); ++b)
    REQUIRE(fits[b] <= fits[b + 1] + 1e-15);
}

TEST_CASE("step function export mirrors the block structure") {
  BlockStructure bs;
  bs.xs = {0.1, 0.2, 0.6};
  bs.multiplicity = {2, 1, 3};
  bs.starts = {0, 2, 3};
  bs.fits = {0.25, 0.75};
  calikit::StepFunction f = bs.to_step_function();
  REQUIRE(f.blocks.size() == 2);
  REQUIRE(f.blocks[0].lower == 0.1);
  REQUIRE(f.blocks[0].upper == 0.2);
  REQUIRE(f.blocks[0].weight == 3.0);
  REQUIRE(f.blocks[0].count == 2);
  REQUIRE(f.blocks[1].lower == 0.6);
  REQUIRE(f.blocks[1].weight == 3.0);
  REQUIRE(f.domain_floor == 0.25);
}
