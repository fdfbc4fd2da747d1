#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "calikit/calikit.hpp"
#include "util.hpp"

using calikit::CalibError;
using calikit::LogitMatrix;
using calikit::TSModel;
using calikit::VSModel;

namespace {

LogitMatrix logits(std::size_t r, std::size_t c,
                   std::initializer_list<double> vals) {
  LogitMatrix z;
  static_cast<calikit::Matrix&>(z) = testutil::mat(r, c, vals);
  return z;
}

}  // namespace

TEST_CASE("temperature one reproduces the plain softmax likelihood") {
  LogitMatrix z = logits(1, 2, {1.0, 0.0});
  double direct = calikit::nll(calikit::probs_from_logits(z), {0});
  REQUIRE(calikit::ts_nll(z, {0}, 1.0) == Catch::Approx(direct).margin(1e-14));
  REQUIRE(calikit::ts_nll(z, {0}, 1.0) ==
          Catch::Approx(-std::log(0.7310585786300049)).margin(1e-14));
}

TEST_CASE("temperature likelihood rejects bad arguments") {
  LogitMatrix z = logits(1, 2, {1.0, 0.0});
  REQUIRE_THROWS_AS(calikit::ts_nll(z, {0}, 0.0), CalibError);
  REQUIRE_THROWS_AS(calikit::ts_nll(z, {0}, -2.0), CalibError);
  REQUIRE_THROWS_AS(calikit::ts_nll(z, {0, 1}, 1.0), CalibError);
}

TEST_CASE("temperature fitting undoes a known distortion") {
  // scores sharpened with T* = 0.5 need T-hat near 1 / 0.5 = 2 to undo
  calikit::CalibrationDataset ds = calikit::gen_calibrated({4000, 6, {}, 0.5, 17});
  TSModel m = calikit::fit_temperature(ds);
  REQUIRE(m.T == Catch::Approx(2.0).margin(0.25));
  double before = calikit::nll(ds.probs, ds.labels);
  double after =
      calikit::nll(calikit::predict_scaled(m, *ds.logits), ds.labels);
  REQUIRE(after < before);
}

TEST_CASE("a single mislabeled sample pushes the temperature to its cap") {
  calikit::Matrix probs = testutil::mat(1, 2, {0.88, 0.12});
  calikit::Matrix z = testutil::mat(1, 2, {2.0, 0.0});
  calikit::CalibrationDataset ds = calikit::validate_dataset(probs, {1}, z);
  TSModel m = calikit::fit_temperature(ds);
  REQUIRE(m.T >= 19.99);  // flattening toward uniform is the best it can do
  REQUIRE(m.T <= 20.0);
}

TEST_CASE("temperature prediction divides logits and stays a distribution") {
  TSModel m;
  m.T = 2.0;
  m.k = 3;
  LogitMatrix z = logits(2, 3, {2.0, 0.0, -2.0, 1.0, 1.0, 1.0});
  calikit::ProbMatrix out = calikit::predict_scaled(m, z);
  LogitMatrix half = logits(2, 3, {1.0, 0.0, -1.0, 0.5, 0.5, 0.5});
  calikit::ProbMatrix expect = calikit::probs_from_logits(half);
  for (std::size_t i = 0; i < out.v.size(); ++i)
    REQUIRE(out.v[i] == Catch::Approx(expect.v[i]).margin(1e-15));

  LogitMatrix wrong = logits(1, 2, {0.0, 1.0});
  REQUIRE_THROWS_AS(calikit::predict_scaled(m, wrong), CalibError);
  TSModel bad;
  bad.T = 0.0;
  bad.k = 2;
  REQUIRE_THROWS_AS(calikit::predict_scaled(bad, wrong), CalibError);
}

TEST_CASE("vector scaling never ends worse than it starts") {
  calikit::CalibrationDataset ds = calikit::gen_calibrated({500, 4, {}, 0.5, 23});
  std::vector<double> ones(4, 1.0), zeros(4, 0.0);
  double init = calikit::detail::vs_nll_grad(*ds.logits, ds.labels, ones,
                                             zeros, nullptr, nullptr);
  VSModel m = calikit::fit_vector_scaling(ds);
  double fin = calikit::detail::vs_nll_grad(*ds.logits, ds.labels, m.scale,
                                            m.bias, nullptr, nullptr);
  REQUIRE(fin <= init);
  REQUIRE(m.scale.size() == 4);
  REQUIRE(m.bias.size() == 4);
}

TEST_CASE("vector scaling recovers a per-class bias shift") {
  // labels drawn from softmax(z); the dataset then reports z shifted by a
  // constant per class, which a bias term can undo exactly
  calikit::Rng rng(400);
  const std::size_t m = 1500, k = 3;
  const double shift[3] = {1.2, -0.5, 0.0};
  calikit::Matrix z(m, k);
  calikit::LabelVector labels(m);
  for (std::size_t i = 0; i < m; ++i) {
    double q[3], mx = -100.0;
    for (std::size_t l = 0; l < k; ++l) {
      z(i, l) = 2.0 * rng.uniform01() - 1.0;
      mx = std::max(mx, z(i, l));
    }
    double sum = 0.0;
    for (std::size_t l = 0; l < k; ++l) {
      q[l] = std::exp(z(i, l) - mx);
      sum += q[l];
    }
    for (std::size_t l = 0; l < k; ++l) q[l] /= sum;
    labels[i] = rng.categorical(q, 3);
    for (std::size_t l = 0; l < k; ++l) z(i, l) += shift[l];
  }
  LogitMatrix zm;
  static_cast<calikit::Matrix&>(zm) = z;
  calikit::CalibrationDataset ds = calikit::validate_dataset(
      calikit::probs_from_logits(zm), labels, z);

  double before = calikit::nll(ds.probs, ds.labels);
  VSModel model = calikit::fit_vector_scaling(ds, {0.05, 4000});
  double after =
      calikit::nll(calikit::predict_scaled(model, *ds.logits), ds.labels);
  REQUIRE(after < before - 0.05);
  // recovered bias differences should roughly cancel the shift differences
  double rec01 = model.bias[0] - model.bias[1];
  REQUIRE(rec01 == Catch::Approx(-(shift[0] - shift[1])).margin(0.3));
}

TEST_CASE("underdetermined vector scaling still runs") {
  calikit::CalibrationDataset ds =
      testutil::dataset(1, 3, {0.5, 0.3, 0.2}, {0});
  VSModel m = calikit::fit_vector_scaling(ds);  // warns on stderr, must not throw
  REQUIRE(m.k == 3);
}

TEST_CASE("scaling methods derive logits from probabilities when missing") {
  calikit::CalibrationDataset ds =
      testutil::dataset(2, 2, {0.7, 0.3, 0.2, 0.8}, {0, 1});
  REQUIRE_FALSE(ds.logits);
  TSModel ts = calikit::fit_temperature(ds);
  REQUIRE(ts.T > 0.0);
  VSModel vs = calikit::fit_vector_scaling(ds);
  REQUIRE(vs.k == 2);
}
