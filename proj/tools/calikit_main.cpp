// calikit command-line interface: synthetic data generation, calibrator
// fitting, prediction, and metric evaluation over CSV files and JSON model
// files. Machine-readable results go to stdout as one JSON object per line;
// diagnostics go to stderr. Exit codes: 0 success, 2 invalid input,
// 3 unknown method, 1 internal failure.

#include <chrono>
#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "calikit/calikit.hpp"

namespace {

using nlohmann::json;

void emit(const json& j) { std::printf("%s\n", j.dump().c_str()); }

calikit::CalibrationDataset load_dataset(const std::string& input,
                                         const std::string& logits_path,
                                         bool require_labels) {
  calikit::PredictionsFile pf = calikit::read_predictions_csv(input);
  if (require_labels && !pf.labels)
    throw calikit::CalibError(calikit::ErrorKind::BadCsv,
                              input + " is missing the label column");
  std::optional<calikit::Matrix> z;
  if (!logits_path.empty()) z = calikit::read_logits_csv(logits_path);
  calikit::LabelVector labels =
      pf.labels ? *pf.labels : calikit::LabelVector(pf.values.rows, 0);
  return calikit::validate_dataset(pf.values, labels, z);
}

struct FitFlags {
  std::string method;
  std::string input;
  std::string logits;
  std::string out;
  std::uint64_t seed = 0;
  calikit::NafirOptions nafir;
  calikit::VSOptions vs;
  double scir_epsilon = 1e-6;
};

int cmd_fit(const FitFlags& f) {
  calikit::Method method = calikit::method_from_name(f.method);
  calikit::CalibrationDataset ds = load_dataset(f.input, f.logits, true);
  auto t0 = std::chrono::steady_clock::now();
  calikit::FittedCalibrator cal;
  switch (method) {
    case calikit::Method::Fir:
      cal = calikit::make_calibrator(calikit::fit_fir(ds));
      break;
    case calikit::Method::NaFir:
      cal = calikit::make_calibrator(calikit::fit_nafir(ds, f.nafir, f.seed));
      break;
    case calikit::Method::Scir:
      cal = calikit::make_calibrator(calikit::fit_scir(ds, f.scir_epsilon));
      break;
    case calikit::Method::Ts:
      cal = calikit::make_calibrator(calikit::fit_temperature(ds));
      break;
    case calikit::Method::Vs:
      cal = calikit::make_calibrator(calikit::fit_vector_scaling(ds, f.vs));
      break;
    case calikit::Method::IrOvr:
      cal = calikit::make_calibrator(calikit::fit_ir_ovr(ds));
      break;
  }
  double fit_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  cal.metadata["fit_seconds"] = fit_seconds;
  cal.metadata["seed"] = f.seed;
  cal.metadata["train_rows"] = ds.samples();
  calikit::save_model(cal, f.out);
  const calikit::LogitMatrix* z = ds.logits ? &*ds.logits : nullptr;
  double train_nll = calikit::nll(cal.predict(ds.probs, z), ds.labels);
  emit({{"fit_seconds", fit_seconds}, {"train_nll", train_nll}, {"out", f.out}});
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& input,
                const std::string& logits_path, const std::string& out) {
  calikit::FittedCalibrator cal = calikit::load_model(model_path);
  calikit::PredictionsFile pf = calikit::read_predictions_csv(input);
  calikit::ProbMatrix probs = calikit::validate_probs(pf.values);
  std::optional<calikit::LogitMatrix> z;
  if (!logits_path.empty()) {
    calikit::Matrix raw = calikit::read_logits_csv(logits_path);
    calikit::LogitMatrix lm;
    static_cast<calikit::Matrix&>(lm) = std::move(raw);
    z = std::move(lm);
  }
  calikit::ProbMatrix preds = cal.predict(probs, z ? &*z : nullptr);
  calikit::write_predictions_csv(out, preds);
  emit({{"rows", preds.rows}, {"k", preds.cols}, {"out", out}});
  return 0;
}

struct EvalFlags {
  std::string input;
  std::string logits;
  std::string model;
  std::string metrics = "nll,brier,conf-ece,cw-ece,tece";
  std::string reliability_out;
  int bins = 15;
  int resamples = 1000;
  std::uint64_t seed = 0;
};

int cmd_evaluate(const EvalFlags& f) {
  calikit::CalibrationDataset ds = load_dataset(f.input, f.logits, true);
  calikit::ProbMatrix preds = ds.probs;
  if (!f.model.empty()) {
    calikit::FittedCalibrator cal = calikit::load_model(f.model);
    preds = cal.predict(ds.probs, ds.logits ? &*ds.logits : nullptr);
  }
  calikit::BinSpec spec;
  spec.count = f.bins;
  json out = json::object();
  for (const std::string& name : calikit::detail::split_csv_line(f.metrics)) {
    std::string metric = calikit::detail::trim(name);
    if (metric.empty()) continue;
    if (metric == "nll")
      out["nll"] = calikit::nll(preds, ds.labels);
    else if (metric == "brier")
      out["brier"] = calikit::brier(preds, ds.labels);
    else if (metric == "conf-ece")
      out["conf-ece"] = calikit::conf_ece(preds, ds.labels, spec);
    else if (metric == "cw-ece")
      out["cw-ece"] = calikit::cw_ece(preds, ds.labels, spec);
    else if (metric == "tece")
      out["tece"] = calikit::tece(preds, ds.labels, spec);
    else if (metric == "pvalue")
      out["pvalue"] =
          calikit::consistency_pvalue(preds, ds.labels, f.resamples, f.seed);
    else
      throw calikit::CalibError(calikit::ErrorKind::BadCsv,
                                "unknown metric '" + metric + "'");
  }
  if (!f.reliability_out.empty())
    calikit::write_reliability_csv(
        f.reliability_out, calikit::reliability_table(preds, ds.labels, spec));
  emit(out);
  return 0;
}

struct SynthFlags {
  std::size_t m = 1000;
  std::size_t k = 10;
  double distort_T = 1.0;
  double alpha = 1.0;
  std::uint64_t seed = 0;
  std::string out;
  std::string logits_out;
};

int cmd_synth(const SynthFlags& f) {
  calikit::SynthConfig cfg;
  cfg.m = f.m;
  cfg.k = f.k;
  cfg.distortion_T = f.distort_T;
  cfg.seed = f.seed;
  cfg.alpha.assign(f.k, f.alpha);
  calikit::CalibrationDataset ds = calikit::gen_calibrated(cfg);
  calikit::write_dataset_csv(f.out, ds.probs, ds.labels);
  if (!f.logits_out.empty()) calikit::write_logits_csv(f.logits_out, *ds.logits);
  emit({{"rows", ds.samples()}, {"k", ds.classes()}, {"out", f.out}});
  return 0;
}

int exit_code_for(const calikit::CalibError& e) {
  switch (e.kind()) {
    case calikit::ErrorKind::UnknownMethod:
      return 3;
    case calikit::ErrorKind::NegativeProbability:
    case calikit::ErrorKind::RowSumZero:
    case calikit::ErrorKind::LabelOutOfRange:
    case calikit::ErrorKind::ShapeMismatch:
    case calikit::ErrorKind::NonFiniteEntry:
    case calikit::ErrorKind::EmptyInstance:
    case calikit::ErrorKind::ThresholdLargerThanBlock:
    case calikit::ErrorKind::NonPositiveT:
    case calikit::ErrorKind::InvalidResampleCount:
    case calikit::ErrorKind::BadModelFile:
    case calikit::ErrorKind::BadCsv:
      return 2;
    default:
      return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"calikit: multi-class probability calibration"};
  app.require_subcommand(1);

  FitFlags fit;
  CLI::App* cfit = app.add_subcommand("fit", "fit a calibrator on labeled predictions");
  cfit->add_option("--method", fit.method,
                   "one of fir, na-fir, scir, ts, vs, ir-ovr")->required();
  cfit->add_option("--input", fit.input, "CSV with p0..p{k-1},label")->required();
  cfit->add_option("--logits", fit.logits, "optional CSV with z0..z{k-1}");
  cfit->add_option("--out", fit.out, "model JSON path")->required();
  cfit->add_option("--seed", fit.seed, "RNG seed for stochastic fits");
  cfit->add_option("--eps-change", fit.nafir.eps_change, "na-fir proposal step");
  cfit->add_option("--beta", fit.nafir.beta, "na-fir inverse temperature");
  cfit->add_option("--iterations", fit.nafir.num_iterations, "na-fir iteration budget");
  cfit->add_option("--patience", fit.nafir.early_stop_patience,
                   "na-fir iterations without improvement before stopping");
  cfit->add_option("--min-blocks", fit.nafir.min_blocks,
                   "na-fir minimum block count (0 disables splitting)");
  cfit->add_option("--split-threshold", fit.nafir.split_size_threshold,
                   "na-fir minimum entries per split block");
  cfit->add_option("--lr", fit.vs.lr, "vector scaling learning rate");
  cfit->add_option("--vs-iters", fit.vs.iters, "vector scaling iterations");
  cfit->add_option("--epsilon", fit.scir_epsilon, "scir smoothing mass");

  std::string pmodel, pinput, plogits, pout;
  CLI::App* cpred = app.add_subcommand("predict", "apply a saved model");
  cpred->add_option("--model", pmodel, "model JSON path")->required();
  cpred->add_option("--input", pinput, "CSV with p0..p{k-1}[,label]")->required();
  cpred->add_option("--logits", plogits, "optional CSV with z0..z{k-1}");
  cpred->add_option("--out", pout, "output CSV path")->required();

  EvalFlags ev;
  CLI::App* ceval = app.add_subcommand("evaluate", "compute calibration metrics");
  ceval->add_option("--input", ev.input, "CSV with p0..p{k-1},label")->required();
  ceval->add_option("--logits", ev.logits, "optional CSV with z0..z{k-1}");
  ceval->add_option("--model", ev.model, "apply this model before evaluating");
  ceval->add_option("--metrics", ev.metrics,
                    "comma list from nll,brier,conf-ece,cw-ece,tece,pvalue");
  ceval->add_option("--bins", ev.bins, "bin count for ECE variants")
      ->check(CLI::PositiveNumber);
  ceval->add_option("--resamples", ev.resamples, "consistency resample count");
  ceval->add_option("--seed", ev.seed, "seed for the consistency test");
  ceval->add_option("--reliability-out", ev.reliability_out,
                    "write the reliability table CSV here");

  SynthFlags sy;
  CLI::App* csynth = app.add_subcommand("synth", "generate a synthetic dataset");
  csynth->add_option("--m", sy.m, "sample count")->required();
  csynth->add_option("--k", sy.k, "class count")->required();
  csynth->add_option("--distort-T", sy.distort_T,
                     "reported scores are softmax(ln q / T)");
  csynth->add_option("--alpha", sy.alpha, "symmetric Dirichlet parameter");
  csynth->add_option("--seed", sy.seed, "RNG seed");
  csynth->add_option("--out", sy.out, "output CSV path")->required();
  csynth->add_option("--logits-out", sy.logits_out, "also write logits here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (cfit->parsed()) return cmd_fit(fit);
    if (cpred->parsed()) return cmd_predict(pmodel, pinput, plogits, pout);
    if (ceval->parsed()) return cmd_evaluate(ev);
    if (csynth->parsed()) return cmd_synth(sy);
  } catch (const calikit::CalibError& e) {
    std::fprintf(stderr, "calikit: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "calikit: internal error: %s\n", e.what());
    return 1;
  }
  return 1;
}
