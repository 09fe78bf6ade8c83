#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ltvs/detect.hpp"
#include "ltvs/filters.hpp"
#include "ltvs/model.hpp"

namespace ltvs {

/// Shortest decimal form that round-trips the exact double.
std::string format_double(double value);

/// Writes via a temp file in the same directory plus rename, so a failed
/// run never leaves a partial file behind.
void atomic_write(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

/// Header k,x1..xn,u1..ul,y1..yp,w1..wn,v1..vp; one row per step.
std::string trace_csv(const SimulationTrace<double>& trace);

/// Header k,h,theta_hat_1..m,r_hat,alarm; one row per step.
std::string detection_csv(const DetectionReport<double>& report);

/// Header k,eps1..p; one row per step.
std::string innovation_csv(const FilterRun<double>& run);

/// Header k,h,h_thresholded; one row per step.
std::string gir_csv(const DetectionReport<double>& report, double tau);

struct MetricsRow {
  std::string config;
  Index seeds = 0;
  double detect_rate = 0.0;
  double false_alarm_rate = 0.0;
  double mean_abs_onset_err = 0.0;
  double median_h_jump = 0.0;
};

/// Header config,seeds,detect_rate,false_alarm_rate,mean_abs_onset_err,median_h_jump.
std::string metrics_csv(const std::vector<MetricsRow>& rows);

}  // namespace ltvs
