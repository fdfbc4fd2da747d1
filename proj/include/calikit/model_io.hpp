#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "calikit/core.hpp"
#include "calikit/flat_iso.hpp"
#include "calikit/ir_ovr.hpp"
#include "calikit/pava.hpp"
#include "calikit/scaling.hpp"
#include "calikit/scir.hpp"

namespace calikit {

enum class Method { Fir, NaFir, Scir, Ts, Vs, IrOvr };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::Fir: return "fir";
    case Method::NaFir: return "na-fir";
    case Method::Scir: return "scir";
    case Method::Ts: return "ts";
    case Method::Vs: return "vs";
    case Method::IrOvr: return "ir-ovr";
  }
  return "unknown";
}

inline Method method_from_name(const std::string& s) {
  if (s == "fir") return Method::Fir;
  if (s == "na-fir") return Method::NaFir;
  if (s == "scir") return Method::Scir;
  if (s == "ts") return Method::Ts;
  if (s == "vs") return Method::Vs;
  if (s == "ir-ovr") return Method::IrOvr;
  throw CalibError(ErrorKind::UnknownMethod, s);
}

inline constexpr int kModelFormatVersion = 1;

// Uniform wrapper around any fitted calibrator, carrying exactly the state a
// save/load round trip preserves. Step-function methods keep edges and fits;
// the cumulative method keeps its points and fits and rebuilds the query
// grid on load, which is deterministic, so reloaded models predict
// bit-identically.
struct FittedCalibrator {
  Method method = Method::Fir;
  std::size_t k = 0;
  StepFunction step;                     // fir, na-fir
  std::vector<StepFunction> per_class;   // ir-ovr
  SCIRModel scir;                        // scir
  TSModel ts;                            // ts
  VSModel vs;                            // vs
  nlohmann::json hyperparameters = nlohmann::json::object();
  nlohmann::json metadata = nlohmann::json::object();

  ProbMatrix predict(const ProbMatrix& probs,
                     const LogitMatrix* logits = nullptr) const {
    switch (method) {
      case Method::Fir:
      case Method::NaFir:
        return detail::eval_rows_normalized(
            probs, k, [&](double p) { return step.eval(p); });
      case Method::IrOvr: {
        IROvRModel m;
        m.per_class = per_class;
        m.k = k;
        return predict_ir_ovr(m, probs);
      }
      case Method::Scir:
        return predict_scir(scir, probs);
      case Method::Ts: {
        if (logits) return predict_scaled(ts, *logits);
        return predict_scaled(ts, logits_from_probs(probs));
      }
      case Method::Vs: {
        if (logits) return predict_scaled(vs, *logits);
        return predict_scaled(vs, logits_from_probs(probs));
      }
    }
    throw CalibError(ErrorKind::UnknownMethod, "unhandled method tag");
  }
};

inline FittedCalibrator make_calibrator(const FIRModel& m) {
  FittedCalibrator c;
  c.method = Method::Fir;
  c.k = m.k;
  c.step = m.fn;
  return c;
}

inline FittedCalibrator make_calibrator(const NAFIRModel& m) {
  FittedCalibrator c;
  c.method = Method::NaFir;
  c.k = m.k;
  c.step = m.blocks.to_step_function();
  c.hyperparameters = {{"eps_change", m.opts.eps_change},
                       {"beta", m.opts.beta},
                       {"num_iterations", m.opts.num_iterations},
                       {"early_stop_patience", m.opts.early_stop_patience},
                       {"min_blocks", m.opts.min_blocks},
                       {"split_size_threshold", m.opts.split_size_threshold}};
  c.metadata = {{"seed", m.seed},
                {"objective", m.objective},
                {"initial_objective", m.initial_objective},
                {"incremental_drift", m.incremental_drift},
                {"iterations_run", m.iterations_run},
                {"fit_seconds", m.fit_seconds}};
  return c;
}

inline FittedCalibrator make_calibrator(const SCIRModel& m) {
  FittedCalibrator c;
  c.method = Method::Scir;
  c.k = m.k;
  c.scir = m;
  c.hyperparameters = {{"epsilon", m.epsilon}};
  return c;
}

inline FittedCalibrator make_calibrator(const TSModel& m) {
  FittedCalibrator c;
  c.method = Method::Ts;
  c.k = m.k;
  c.ts = m;
  return c;
}

inline FittedCalibrator make_calibrator(const VSModel& m) {
  FittedCalibrator c;
  c.method = Method::Vs;
  c.k = m.k;
  c.vs = m;
  return c;
}

inline FittedCalibrator make_calibrator(const IROvRModel& m) {
  FittedCalibrator c;
  c.method = Method::IrOvr;
  c.k = m.k;
  c.per_class = m.per_class;
  return c;
}

namespace detail {

inline nlohmann::json step_to_json(const StepFunction& f) {
  nlohmann::json j;
  std::vector<double> lower, upper, fit, weight;
  std::vector<std::size_t> count;
  for (const StepBlock& b : f.blocks) {
    lower.push_back(b.lower);
    upper.push_back(b.upper);
    fit.push_back(b.fit);
    weight.push_back(b.weight);
    count.push_back(b.count);
  }
  j["lower"] = lower;
  j["upper"] = upper;
  j["fit"] = fit;
  j["weight"] = weight;
  j["count"] = count;
  j["floor"] = f.domain_floor;
  return j;
}

inline StepFunction step_from_json(const nlohmann::json& j) {
  StepFunction f;
  const auto& lower = j.at("lower");
  const auto& upper = j.at("upper");
  const auto& fit = j.at("fit");
  const auto& weight = j.at("weight");
  const auto& count = j.at("count");
  if (lower.size() != upper.size() || lower.size() != fit.size() ||
      lower.size() != weight.size() || lower.size() != count.size() ||
      lower.empty())
    throw CalibError(ErrorKind::BadModelFile, "step function arrays disagree");
  f.blocks.resize(lower.size());
  double prev_fit = -std::numeric_limits<double>::infinity();
  double prev_upper = -std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < f.blocks.size(); ++b) {
    StepBlock& blk = f.blocks[b];
    blk.lower = lower[b].get<double>();
    blk.upper = upper[b].get<double>();
    blk.fit = fit[b].get<double>();
    blk.weight = weight[b].get<double>();
    blk.count = count[b].get<std::size_t>();
    if (blk.lower > blk.upper || blk.lower < prev_upper || blk.fit < prev_fit)
      throw CalibError(ErrorKind::BadModelFile,
                       "step function blocks out of order at block " +
                           std::to_string(b));
    prev_fit = blk.fit;
    prev_upper = blk.upper;
  }
  f.domain_floor = j.at("floor").get<double>();
  return f;
}

}  // namespace detail

inline nlohmann::json model_to_json(const FittedCalibrator& c) {
  nlohmann::json j;
  j["format_version"] = kModelFormatVersion;
  j["method"] = method_name(c.method);
  j["k"] = c.k;
  j["hyperparameters"] = c.hyperparameters;
  j["metadata"] = c.metadata;
  nlohmann::json payload;
  switch (c.method) {
    case Method::Fir:
    case Method::NaFir:
      payload["step"] = detail::step_to_json(c.step);
      break;
    case Method::IrOvr: {
      nlohmann::json arr = nlohmann::json::array();
      for (const StepFunction& f : c.per_class) arr.push_back(detail::step_to_json(f));
      payload["per_class"] = arr;
      break;
    }
    case Method::Scir: {
      std::vector<double> q, y, w, fits;
      std::vector<int> rank;
      for (const CumulativePoint& p : c.scir.points) {
        q.push_back(p.q);
        rank.push_back(p.rank);
        y.push_back(p.y);
        w.push_back(p.w);
      }
      payload["q"] = q;
      payload["rank"] = rank;
      payload["y"] = y;
      payload["w"] = w;
      payload["fits"] = c.scir.fits;
      payload["epsilon"] = c.scir.epsilon;
      break;
    }
    case Method::Ts:
      payload["T"] = c.ts.T;
      break;
    case Method::Vs:
      payload["scale"] = c.vs.scale;
      payload["bias"] = c.vs.bias;
      break;
  }
  j["payload"] = payload;
  return j;
}

inline FittedCalibrator model_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("format_version") || !j.contains("method") ||
      !j.contains("k") || !j.contains("payload"))
    throw CalibError(ErrorKind::BadModelFile, "missing required model fields");
  if (j.at("format_version").get<int>() != kModelFormatVersion)
    throw CalibError(ErrorKind::BadModelFile,
                     "unsupported format_version " +
                         j.at("format_version").dump());
  FittedCalibrator c;
  c.method = method_from_name(j.at("method").get<std::string>());
  c.k = j.at("k").get<std::size_t>();
  if (c.k < 2) throw CalibError(ErrorKind::BadModelFile, "k must be at least 2");
  if (j.contains("hyperparameters")) c.hyperparameters = j.at("hyperparameters");
  if (j.contains("metadata")) c.metadata = j.at("metadata");
  const nlohmann::json& payload = j.at("payload");
  switch (c.method) {
    case Method::Fir:
    case Method::NaFir:
      c.step = detail::step_from_json(payload.at("step"));
      break;
    case Method::IrOvr: {
      const auto& arr = payload.at("per_class");
      if (arr.size() != c.k)
        throw CalibError(ErrorKind::BadModelFile, "per-class model count differs from k");
      for (const auto& f : arr) c.per_class.push_back(detail::step_from_json(f));
      break;
    }
    case Method::Scir: {
      const auto& q = payload.at("q");
      const auto& rank = payload.at("rank");
      const auto& y = payload.at("y");
      const auto& w = payload.at("w");
      const auto& fits = payload.at("fits");
      if (q.size() != rank.size() || q.size() != y.size() ||
          q.size() != w.size() || q.size() != fits.size() || q.empty())
        throw CalibError(ErrorKind::BadModelFile, "cumulative point arrays disagree");
      SCIRModel m;
      m.k = c.k;
      m.epsilon = payload.at("epsilon").get<double>();
      m.points.resize(q.size());
      m.fits.resize(q.size());
      for (std::size_t i = 0; i < q.size(); ++i) {
        m.points[i].q = q[i].get<double>();
        m.points[i].rank = rank[i].get<int>();
        m.points[i].y = y[i].get<double>();
        m.points[i].w = w[i].get<double>();
        m.fits[i] = fits[i].get<double>();
        if (m.points[i].rank < 1 || m.points[i].rank >= static_cast<int>(c.k))
          throw CalibError(ErrorKind::BadModelFile, "cumulative rank outside [1, k-1]");
      }
      m.grid = build_prediction_grid(m.points, m.fits, m.k);
      c.scir = std::move(m);
      break;
    }
    case Method::Ts:
      c.ts.T = payload.at("T").get<double>();
      c.ts.k = c.k;
      if (!(c.ts.T > 0.0))
        throw CalibError(ErrorKind::BadModelFile, "temperature must be positive");
      break;
    case Method::Vs:
      c.vs.scale = payload.at("scale").get<std::vector<double>>();
      c.vs.bias = payload.at("bias").get<std::vector<double>>();
      c.vs.k = c.k;
      if (c.vs.scale.size() != c.k || c.vs.bias.size() != c.k)
        throw CalibError(ErrorKind::BadModelFile, "scale/bias length differs from k");
      break;
  }
  return c;
}

inline void save_model(const FittedCalibrator& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw CalibError(ErrorKind::BadModelFile, "cannot open " + path + " for writing");
  out << model_to_json(c).dump(2) << "\n";
  if (!out) throw CalibError(ErrorKind::BadModelFile, "failed writing " + path);
}

inline FittedCalibrator load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CalibError(ErrorKind::BadModelFile, "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CalibError(ErrorKind::BadModelFile, std::string("parse error: ") + e.what());
  }
  try {
    return model_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw CalibError(ErrorKind::BadModelFile, std::string("schema error: ") + e.what());
  }
}

}  // namespace calikit
