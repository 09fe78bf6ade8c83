#include "ltvs/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <system_error>

#include "ltvs/errors.hpp"

namespace ltvs {

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

void atomic_write(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::error_code ec;
  fs::create_directories(dir, ec);
  static std::mt19937_64 tmp_rng{std::random_device{}()};
  const fs::path tmp =
      dir / (path.filename().string() + ".tmp" + std::to_string(tmp_rng()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) {
      fs::remove(tmp, ec);
      throw Error("write failed for " + tmp.string());
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error("rename failed for " + path.string());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

namespace {

void append_series(std::string& header, const char* base, Index count) {
  for (Index i = 1; i <= count; ++i) {
    header += ',';
    header += base;
    header += std::to_string(i);
  }
}

void append_values(std::string& row, const VectorX<double>& v) {
  for (Index i = 0; i < v.size(); ++i) {
    row += ',';
    row += format_double(v(i));
  }
}

}  // namespace

std::string trace_csv(const SimulationTrace<double>& trace) {
  const Dimensions& d = trace.dims;
  std::string out = "k";
  append_series(out, "x", d.n);
  append_series(out, "u", d.l);
  append_series(out, "y", d.p);
  append_series(out, "w", d.n);
  append_series(out, "v", d.p);
  out += '\n';
  for (Index k = 0; k < trace.length(); ++k) {
    out += std::to_string(k);
    append_values(out, trace.x[k]);
    append_values(out, trace.u[k]);
    append_values(out, trace.y[k]);
    append_values(out, trace.w[k]);
    append_values(out, trace.v[k]);
    out += '\n';
  }
  return out;
}

std::string detection_csv(const DetectionReport<double>& report) {
  const Index m = report.final_theta.size();
  std::string out = "k,h";
  append_series(out, "theta_hat_", m);
  out += ",r_hat,alarm\n";
  std::vector<char> alarm(report.h.size(), 0);
  for (const auto& a : report.alarms) alarm[static_cast<std::size_t>(a.step)] = 1;
  for (Index k = 0; k < report.length(); ++k) {
    out += std::to_string(k);
    out += ',';
    out += format_double(report.h[k]);
    append_values(out, report.theta_hat[k]);
    out += ',';
    out += std::to_string(report.r_hat[k]);
    out += ',';
    out += alarm[static_cast<std::size_t>(k)] ? '1' : '0';
    out += '\n';
  }
  return out;
}

std::string innovation_csv(const FilterRun<double>& run) {
  const Index p = run.innovation.empty() ? 0 : run.innovation.front().size();
  std::string out = "k";
  append_series(out, "eps", p);
  out += '\n';
  for (Index k = 0; k < run.length(); ++k) {
    out += std::to_string(k);
    append_values(out, run.innovation[k]);
    out += '\n';
  }
  return out;
}

std::string gir_csv(const DetectionReport<double>& report, double tau) {
  std::string out = "k,h,h_thresholded\n";
  for (Index k = 0; k < report.length(); ++k) {
    const double h = report.h[k];
    const double thr = (h >= tau && h > 0.0) ? h : 0.0;
    out += std::to_string(k);
    out += ',';
    out += format_double(h);
    out += ',';
    out += format_double(thr);
    out += '\n';
  }
  return out;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out =
      "config,seeds,detect_rate,false_alarm_rate,mean_abs_onset_err,median_h_jump\n";
  for (const auto& r : rows) {
    out += r.config;
    out += ',';
    out += std::to_string(r.seeds);
    out += ',';
    out += format_double(r.detect_rate);
    out += ',';
    out += format_double(r.false_alarm_rate);
    out += ',';
    out += format_double(r.mean_abs_onset_err);
    out += ',';
    out += format_double(r.median_h_jump);
    out += '\n';
  }
  return out;
}

}  // namespace ltvs
