#pragma once

#include "mwcnp/harness/pipeline.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace mwcnp::harness {

struct ModeSummary {
  Mode mode = Mode::norml1;
  std::size_t count = 0;
  double mean = 0.0;    // post_return
  double median = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for a single row
  double pre_mean = 0.0;
};

struct Summary {
  std::vector<ModeSummary> modes;  // in Mode order; modes without rows are omitted
  std::vector<std::string> warnings;
};

Summary summarize(const std::vector<EvalRecord>& records);
std::string format_summary(const Summary& summary);

// Grouped bars of post_return per task and mode.
std::string per_task_svg(const std::vector<EvalRecord>& records);
// Box plot with the individual task values per mode.
std::string distribution_svg(const std::vector<EvalRecord>& records);

// Point-env paths (x, y) of the mean-action policy before and after each
// mode's fine-tuning, one panel per task.
struct TrajectoryPanel {
  int task_id = 0;
  double logged_param = 0.0;  // the logged hidden parameter, drawn as the force direction
  std::vector<Eigen::Vector2d> pre;
  std::vector<std::pair<Mode, std::vector<Eigen::Vector2d>>> post;
};
std::string trajectory_svg(const std::vector<TrajectoryPanel>& panels);

struct ReportOutputs {
  Summary summary;
  std::filesystem::path table;
  std::filesystem::path per_task_plot;
  std::filesystem::path distribution_plot;
};

// Reads a metrics CSV and writes summary.txt, per_task.svg and
// distribution.svg into `out_dir`.
ReportOutputs cmd_report(const std::filesystem::path& metrics_csv, const std::filesystem::path& out_dir);

}  // namespace mwcnp::harness
