#pragma once

#include "fnocg/assimilation.hpp"
#include "fnocg/datagen.hpp"
#include "fnocg/operator_net.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fnocg {

enum class Method { cg, fno, fno_cg };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::cg: return "CG";
    case Method::fno: return "FNO";
    case Method::fno_cg: return "FNO-CG";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "CG") return Method::cg;
  if (s == "FNO") return Method::fno;
  if (s == "FNO-CG") return Method::fno_cg;
  throw FormatError("unknown method '" + s + "'");
}

/// |u_true - u| / |u_true|.
inline double relative_error(const StateVector& pred, const StateVector& truth) {
  require_size(pred.size(), truth.size(), "relative_error");
  const double tn = truth.norm();
  if (!(tn > 0.0)) throw ConfigError("relative_error: zero-norm truth");
  return (truth - pred).norm() / tn;
}

struct RunRecord {
  std::uint64_t sample_id = 0;
  Method method = Method::cg;
  double relative_error = 0.0;
  std::optional<int> n_iterations;  // absent for the standalone surrogate
  double kappa = 0.0;
  double wall_time = 0.0;
  bool converged = true;
  double final_residual = 0.0;  // relative residual |f - A x| / |f| of the returned state
  std::vector<double> error_curve;  // relative error per CG iterate, starting at x0
  StateVector solution;
};

/// Maps f to an initial state; the trained FNO in production, a test double
/// in tests.
using Surrogate = std::function<StateVector(const StateVector&)>;

inline Surrogate model_surrogate(const FnoModel& model) {
  return [&model](const StateVector& f) { return fno_predict(model, f); };
}

/// CG from u_b, the surrogate alone, or CG from the surrogate's output.
/// A solver failure is recorded as converged = false.
inline RunRecord run_method(const Sample& smp, const VarProblem& problem, Method method, const Surrogate& surrogate,
                            const CgSettings& settings, double kappa) {
  RunRecord rec;
  rec.sample_id = smp.id;
  rec.method = method;
  rec.kappa = kappa;
  const auto t0 = std::chrono::steady_clock::now();
  const HessianOperator hess(problem);
  if (method != Method::cg) require(static_cast<bool>(surrogate), "run_method: surrogate required");

  StateVector x0 = method == Method::cg ? problem.background : surrogate(smp.f);
  require_size(x0.size(), problem.grid.n_x, "run_method initial state");
  if (method == Method::fno) {
    rec.solution = x0;
    rec.converged = true;
    rec.final_residual = (smp.f - hess.apply(x0)).norm() / smp.f.norm();
  } else {
    StateVector last = x0;
    try {
      const CgResult res = cg_solve(hess, smp.f, x0, settings, [&](int, const StateVector& x) {
        rec.error_curve.push_back(relative_error(x, smp.u0_true));
        last = x;
      });
      rec.n_iterations = res.n_iterations;
      rec.converged = res.converged;
      rec.final_residual = res.final_relative_residual();
      rec.solution = res.solution;
    } catch (const NumericalError&) {
      rec.converged = false;
      rec.n_iterations = static_cast<int>(rec.error_curve.size()) - 1;
      rec.solution = last;
      rec.final_residual = std::numeric_limits<double>::quiet_NaN();
    }
  }
  rec.relative_error = relative_error(rec.solution, smp.u0_true);
  rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

struct SummaryStats {
  std::size_t n_samples = 0;
  double cg_mean_error = 0.0;
  double fno_mean_error = 0.0;
  double fnocg_mean_error = 0.0;
  double cg_mean_iterations = 0.0;
  double fnocg_mean_iterations = 0.0;
  double cg_converged_fraction = 0.0;
  double fnocg_converged_fraction = 0.0;
  double error_reduction_pct = 0.0;      // (CG - FNO-CG) / CG * 100
  double iteration_reduction_pct = 0.0;  // (CG - FNO-CG) / CG * 100
};

inline double reduction_percent(double baseline, double improved) {
  return baseline == 0.0 ? 0.0 : (baseline - improved) / baseline * 100.0;
}

inline SummaryStats summarize(const std::vector<RunRecord>& records) {
  SummaryStats s;
  std::size_t n_cg = 0, n_fno = 0, n_fnocg = 0;
  double conv_cg = 0.0, conv_fnocg = 0.0;
  for (const auto& r : records) {
    switch (r.method) {
      case Method::cg:
        ++n_cg;
        s.cg_mean_error += r.relative_error;
        s.cg_mean_iterations += r.n_iterations.value_or(0);
        conv_cg += r.converged ? 1.0 : 0.0;
        break;
      case Method::fno:
        ++n_fno;
        s.fno_mean_error += r.relative_error;
        break;
      case Method::fno_cg:
        ++n_fnocg;
        s.fnocg_mean_error += r.relative_error;
        s.fnocg_mean_iterations += r.n_iterations.value_or(0);
        conv_fnocg += r.converged ? 1.0 : 0.0;
        break;
    }
  }
  auto mean = [](double sum, std::size_t n) { return n == 0 ? 0.0 : sum / static_cast<double>(n); };
  s.n_samples = n_cg;
  s.cg_mean_error = mean(s.cg_mean_error, n_cg);
  s.cg_mean_iterations = mean(s.cg_mean_iterations, n_cg);
  s.cg_converged_fraction = mean(conv_cg, n_cg);
  s.fno_mean_error = mean(s.fno_mean_error, n_fno);
  s.fnocg_mean_error = mean(s.fnocg_mean_error, n_fnocg);
  s.fnocg_mean_iterations = mean(s.fnocg_mean_iterations, n_fnocg);
  s.fnocg_converged_fraction = mean(conv_fnocg, n_fnocg);
  s.error_reduction_pct = reduction_percent(s.cg_mean_error, s.fnocg_mean_error);
  s.iteration_reduction_pct = reduction_percent(s.cg_mean_iterations, s.fnocg_mean_iterations);
  return s;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw FormatError("bad number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
    throw FormatError("bad number '" + s + "'");
  }
}

inline constexpr const char* kRecordsHeader =
    "sample_id,method,relative_error,n_iterations,kappa,wall_time_s,converged,final_residual";

inline void write_records_csv(const std::filesystem::path& path, const std::vector<RunRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kRecordsHeader << '\n';
  for (const auto& r : records) {
    out << r.sample_id << ',' << to_string(r.method) << ',' << format_double(r.relative_error) << ','
        << (r.n_iterations ? std::to_string(*r.n_iterations) : std::string()) << ',' << format_double(r.kappa)
        << ',' << format_double(r.wall_time) << ',' << (r.converged ? 1 : 0) << ','
        << format_double(r.final_residual) << '\n';
  }
}

inline std::vector<RunRecord> read_records_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kRecordsHeader) {
    throw FormatError(path.string() + ": unexpected records header");
  }
  std::vector<RunRecord> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 8) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 8 columns");
    RunRecord r;
    try {
      r.sample_id = std::stoull(cells[0]);
      r.method = parse_method(cells[1]);
      r.relative_error = parse_double(cells[2]);
      if (!cells[3].empty()) r.n_iterations = std::stoi(cells[3]);
      r.kappa = parse_double(cells[4]);
      r.wall_time = parse_double(cells[5]);
      r.converged = cells[6] == "1";
      r.final_residual = parse_double(cells[7]);
    } catch (const std::logic_error& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline void write_summary_csv(const std::filesystem::path& path, const SummaryStats& s) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "metric,value\n";
  out << "n_samples," << s.n_samples << '\n';
  out << "cg_mean_relative_error," << format_double(s.cg_mean_error) << '\n';
  out << "fno_mean_relative_error," << format_double(s.fno_mean_error) << '\n';
  out << "fnocg_mean_relative_error," << format_double(s.fnocg_mean_error) << '\n';
  out << "cg_mean_iterations," << format_double(s.cg_mean_iterations) << '\n';
  out << "fnocg_mean_iterations," << format_double(s.fnocg_mean_iterations) << '\n';
  out << "cg_converged_fraction," << format_double(s.cg_converged_fraction) << '\n';
  out << "fnocg_converged_fraction," << format_double(s.fnocg_converged_fraction) << '\n';
  out << "error_reduction_pct," << format_double(s.error_reduction_pct) << '\n';
  out << "iteration_reduction_pct," << format_double(s.iteration_reduction_pct) << '\n';
}

inline SummaryStats read_summary_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::map<std::string, double> kv;
  while (std::getline(in, line)) {
    const auto cells = split_csv_line(line);
    if (cells.size() != 2) throw FormatError(path.string() + ": malformed summary row");
    kv[cells[0]] = parse_double(cells[1]);
  }
  SummaryStats s;
  s.n_samples = static_cast<std::size_t>(kv.at("n_samples"));
  s.cg_mean_error = kv.at("cg_mean_relative_error");
  s.fno_mean_error = kv.at("fno_mean_relative_error");
  s.fnocg_mean_error = kv.at("fnocg_mean_relative_error");
  s.cg_mean_iterations = kv.at("cg_mean_iterations");
  s.fnocg_mean_iterations = kv.at("fnocg_mean_iterations");
  s.cg_converged_fraction = kv.at("cg_converged_fraction");
  s.fnocg_converged_fraction = kv.at("fnocg_converged_fraction");
  s.error_reduction_pct = kv.at("error_reduction_pct");
  s.iteration_reduction_pct = kv.at("iteration_reduction_pct");
  return s;
}

/// Per-sample differences against CG: dE_FNO, dE_FNO-CG and dn_FNO-CG.
struct SampleDelta {
  std::uint64_t sample_id = 0;
  double kappa = 0.0;
  double d_error_fno = 0.0;
  double d_error_fnocg = 0.0;
  int d_iterations_fnocg = 0;
};

inline std::vector<SampleDelta> compute_deltas(const std::vector<RunRecord>& records) {
  std::map<std::uint64_t, std::array<const RunRecord*, 3>> by_id;
  for (const auto& r : records) by_id[r.sample_id][static_cast<std::size_t>(r.method)] = &r;
  std::vector<SampleDelta> out;
  for (const auto& [id, rs] : by_id) {
    const RunRecord* cg = rs[0];
    const RunRecord* fno = rs[1];
    const RunRecord* hyb = rs[2];
    if (cg == nullptr || fno == nullptr || hyb == nullptr) continue;
    out.push_back({id, cg->kappa, fno->relative_error - cg->relative_error, hyb->relative_error - cg->relative_error,
                   hyb->n_iterations.value_or(0) - cg->n_iterations.value_or(0)});
  }
  return out;
}

inline void write_deltas_csv(const std::filesystem::path& path, const std::vector<SampleDelta>& deltas) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "sample_id,kappa,dE_FNO,dE_FNO-CG,dn_FNO-CG\n";
  for (const auto& d : deltas) {
    out << d.sample_id << ',' << format_double(d.kappa) << ',' << format_double(d.d_error_fno) << ','
        << format_double(d.d_error_fnocg) << ',' << d.d_iterations_fnocg << '\n';
  }
}

/// Per-iteration relative errors for the samples chosen for convergence plots.
struct CurveRow {
  std::uint64_t sample_id;
  Method method;
  int iteration;
  double relative_error;
};

inline void write_curves_csv(const std::filesystem::path& path, const std::vector<RunRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "sample_id,method,iteration,relative_error\n";
  for (const auto& r : records) {
    for (std::size_t i = 0; i < r.error_curve.size(); ++i) {
      out << r.sample_id << ',' << to_string(r.method) << ',' << i << ',' << format_double(r.error_curve[i]) << '\n';
    }
  }
}

inline std::vector<CurveRow> read_curves_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<CurveRow> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 4) throw FormatError(path.string() + ": malformed curve row");
    out.push_back({std::stoull(cells[0]), parse_method(cells[1]), std::stoi(cells[2]), parse_double(cells[3])});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Suite

struct SuiteOptions {
  CgSettings solver;
  std::size_t limit = 0;        // evaluate only the first `limit` test samples; 0 = all
  int curve_samples = 3;        // samples whose convergence curves are written
  std::uint64_t curve_seed = 0;
  bool record_wall_time = true; // false writes 0 so records.csv is byte-reproducible
};

struct SuiteResult {
  std::vector<RunRecord> records;
  SummaryStats summary;
  std::vector<std::uint64_t> curve_ids;
};

/// Runs CG, FNO and FNO-CG on every test sample and writes records.csv,
/// summary.csv, deltas.csv and curves.csv into `out_dir`.
inline SuiteResult run_suite(const Dataset& ds, const FnoModel& model, const std::filesystem::path& out_dir,
                             const SuiteOptions& opt, const std::function<void(std::size_t, std::size_t)>& progress = {}) {
  std::filesystem::create_directories(out_dir);
  const std::size_t n = opt.limit == 0 ? ds.test.size() : std::min(opt.limit, ds.test.size());
  require(n > 0, "run_suite: no test samples");
  CovarianceCache covs(ds.settings);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(opt.curve_seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::uint64_t> curve_ids;
  for (int i = 0; i < opt.curve_samples && i < static_cast<int>(n); ++i) {
    curve_ids.push_back(ds.test[order[static_cast<std::size_t>(i)]].id);
  }
  std::sort(curve_ids.begin(), curve_ids.end());

  SuiteResult result;
  result.curve_ids = curve_ids;
  std::vector<RunRecord> curve_records;
  const std::filesystem::path partial = out_dir / "records.partial.csv";
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& smp = ds.test[i];
    const VarProblem problem = build_problem(smp, ds.settings, covs);
    const double kappa = smp.has_kappa() ? smp.kappa : condition_number(HessianOperator(problem));

    const auto t0 = std::chrono::steady_clock::now();
    const StateVector prediction = fno_predict(model, smp.f);
    const double t_fno = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const Surrogate cached = [&prediction](const StateVector&) { return prediction; };

    for (Method m : {Method::cg, Method::fno, Method::fno_cg}) {
      RunRecord rec = run_method(smp, problem, m, cached, opt.solver, kappa);
      if (m != Method::cg) rec.wall_time += t_fno;
      if (!opt.record_wall_time) rec.wall_time = 0.0;
      if (std::binary_search(curve_ids.begin(), curve_ids.end(), smp.id)) curve_records.push_back(rec);
      rec.error_curve.clear();
      rec.error_curve.shrink_to_fit();
      rec.solution = StateVector();
      result.records.push_back(std::move(rec));
    }
    if (progress) progress(i + 1, n);
    if ((i + 1) % 500 == 0) write_records_csv(partial, result.records);
  }
  result.summary = summarize(result.records);
  write_records_csv(out_dir / "records.csv", result.records);
  write_summary_csv(out_dir / "summary.csv", result.summary);
  write_deltas_csv(out_dir / "deltas.csv", compute_deltas(result.records));
  write_curves_csv(out_dir / "curves.csv", curve_records);
  std::filesystem::remove(partial);
  return result;
}

}  // namespace fnocg
