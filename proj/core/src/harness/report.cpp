#include "mwcnp/harness/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace mwcnp::harness {

namespace fs = std::filesystem;

namespace {

constexpr Mode kAllModes[] = {Mode::norml1, Mode::oracle25, Mode::mwcnp};

const char* mode_colour(Mode m) {
  switch (m) {
    case Mode::norml1: return "#d62728";
    case Mode::oracle25: return "#2ca02c";
    case Mode::mwcnp: return "#1f77b4";
  }
  return "#777777";
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Linear interpolation between order statistics.
double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::map<Mode, std::vector<const EvalRecord*>> by_mode(const std::vector<EvalRecord>& records) {
  std::map<Mode, std::vector<const EvalRecord*>> out;
  for (const auto& r : records) out[r.mode].push_back(&r);
  return out;
}

struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  double top = 40.0;
  double bottom = 360.0;
  double y(double v) const { return bottom - (v - lo) / (hi - lo) * (bottom - top); }
};

Axis value_axis(const std::vector<EvalRecord>& records, bool include_zero) {
  Axis a;
  a.lo = include_zero ? 0.0 : records.front().post_return;
  a.hi = a.lo;
  for (const auto& r : records) {
    a.lo = std::min(a.lo, r.post_return);
    a.hi = std::max(a.hi, r.post_return);
  }
  if (a.hi - a.lo < 1e-12) {
    a.lo -= 1.0;
    a.hi += 1.0;
  }
  const double pad = 0.05 * (a.hi - a.lo);
  if (!(include_zero && a.lo == 0.0)) a.lo -= pad;
  if (!(include_zero && a.hi == 0.0)) a.hi += pad;
  return a;
}

void svg_open(std::ostringstream& o, int width, int height, const std::string& title) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
}

void y_ticks(std::ostringstream& o, const Axis& a, double x0, double x1) {
  o << std::setprecision(4);
  for (int i = 0; i <= 5; ++i) {
    const double v = a.lo + (a.hi - a.lo) * i / 5.0;
    const double y = a.y(v);
    o << "<line x1=\"" << x0 << "\" y1=\"" << y << "\" x2=\"" << x1 << "\" y2=\"" << y
      << "\" stroke=\"#dddddd\"/>\n";
    o << "<text x=\"" << x0 - 4 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << v << "</text>\n";
  }
}

void legend(std::ostringstream& o, const std::vector<Mode>& modes, double x, double y) {
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const double yy = y + 16.0 * static_cast<double>(i);
    o << "<rect x=\"" << x << "\" y=\"" << yy - 9 << "\" width=\"10\" height=\"10\" fill=\"" << mode_colour(modes[i])
      << "\"/>\n";
    o << "<text x=\"" << x + 14 << "\" y=\"" << yy << "\">" << to_string(modes[i]) << "</text>\n";
  }
}

std::vector<Mode> present_modes(const std::vector<EvalRecord>& records) {
  std::vector<Mode> out;
  for (Mode m : kAllModes) {
    if (std::any_of(records.begin(), records.end(), [&](const EvalRecord& r) { return r.mode == m; })) out.push_back(m);
  }
  return out;
}

}  // namespace

Summary summarize(const std::vector<EvalRecord>& records) {
  Summary s;
  const auto groups = by_mode(records);
  for (Mode m : kAllModes) {
    const auto it = groups.find(m);
    if (it == groups.end()) {
      s.warnings.push_back("mode " + to_string(m) + " has no rows; omitted");
      continue;
    }
    std::vector<double> post;
    double pre = 0.0;
    for (const auto* r : it->second) {
      post.push_back(r->post_return);
      pre += r->pre_return;
    }
    ModeSummary ms;
    ms.mode = m;
    ms.count = post.size();
    double sum = 0.0;
    for (double v : post) sum += v;
    ms.mean = sum / static_cast<double>(post.size());
    ms.median = median_of(post);
    if (post.size() > 1) {
      double ss = 0.0;
      for (double v : post) ss += (v - ms.mean) * (v - ms.mean);
      ms.stddev = std::sqrt(ss / static_cast<double>(post.size() - 1));
    }
    ms.pre_mean = pre / static_cast<double>(post.size());
    s.modes.push_back(ms);
  }
  return s;
}

std::string format_summary(const Summary& summary) {
  std::ostringstream o;
  o << std::left << std::setw(10) << "mode" << std::right << std::setw(6) << "n" << std::setw(14) << "mean"
    << std::setw(14) << "median" << std::setw(14) << "std" << std::setw(14) << "pre_mean" << '\n';
  o << std::fixed << std::setprecision(4);
  for (const auto& m : summary.modes) {
    o << std::left << std::setw(10) << to_string(m.mode) << std::right << std::setw(6) << m.count << std::setw(14)
      << m.mean << std::setw(14) << m.median << std::setw(14) << m.stddev << std::setw(14) << m.pre_mean << '\n';
  }
  for (const auto& w : summary.warnings) o << "warning: " << w << '\n';
  return o.str();
}

std::string per_task_svg(const std::vector<EvalRecord>& records) {
  std::ostringstream o;
  if (records.empty()) {
    svg_open(o, 400, 100, "no records");
    o << "</svg>\n";
    return o.str();
  }
  const std::vector<Mode> modes = present_modes(records);
  int max_task = 0;
  for (const auto& r : records) max_task = std::max(max_task, r.task_id);
  const int tasks = max_task + 1;
  const double left = 70.0;
  const double group = 14.0 * static_cast<double>(modes.size()) + 10.0;
  const int width = static_cast<int>(left + group * tasks + 120.0);
  svg_open(o, width, 400, "Post-update return per task");
  const Axis a = value_axis(records, true);
  y_ticks(o, a, left, left + group * tasks);
  const double zero = a.y(0.0);
  for (const auto& r : records) {
    const auto mi = static_cast<double>(std::find(modes.begin(), modes.end(), r.mode) - modes.begin());
    const double x = left + group * r.task_id + 5.0 + 14.0 * mi;
    const double y = a.y(r.post_return);
    o << "<rect x=\"" << x << "\" y=\"" << std::min(y, zero) << "\" width=\"12\" height=\"" << std::abs(zero - y)
      << "\" fill=\"" << mode_colour(r.mode) << "\"/>\n";
  }
  for (int t = 0; t < tasks; ++t) {
    o << "<text x=\"" << left + group * (t + 0.5) << "\" y=\"378\" text-anchor=\"middle\">" << t << "</text>\n";
  }
  o << "<text x=\"" << left + group * tasks / 2 << "\" y=\"395\" text-anchor=\"middle\">task</text>\n";
  legend(o, modes, left + group * tasks + 15.0, 50.0);
  o << "</svg>\n";
  return o.str();
}

std::string distribution_svg(const std::vector<EvalRecord>& records) {
  std::ostringstream o;
  if (records.empty()) {
    svg_open(o, 400, 100, "no records");
    o << "</svg>\n";
    return o.str();
  }
  const std::vector<Mode> modes = present_modes(records);
  const auto groups = by_mode(records);
  const double left = 70.0;
  const double slot = 120.0;
  const int width = static_cast<int>(left + slot * static_cast<double>(modes.size()) + 20.0);
  svg_open(o, width, 400, "Post-update return by mode");
  const Axis a = value_axis(records, false);
  y_ticks(o, a, left, left + slot * static_cast<double>(modes.size()));
  for (std::size_t i = 0; i < modes.size(); ++i) {
    std::vector<double> v;
    for (const auto* r : groups.at(modes[i])) v.push_back(r->post_return);
    const double cx = left + slot * (static_cast<double>(i) + 0.5);
    const double q1 = a.y(quantile(v, 0.25));
    const double q3 = a.y(quantile(v, 0.75));
    const double med = a.y(quantile(v, 0.5));
    const double lo = a.y(*std::min_element(v.begin(), v.end()));
    const double hi = a.y(*std::max_element(v.begin(), v.end()));
    const char* c = mode_colour(modes[i]);
    o << "<line x1=\"" << cx << "\" y1=\"" << lo << "\" x2=\"" << cx << "\" y2=\"" << hi << "\" stroke=\"" << c
      << "\"/>\n";
    o << "<rect x=\"" << cx - 25 << "\" y=\"" << q3 << "\" width=\"50\" height=\"" << std::max(q1 - q3, 0.5)
      << "\" fill=\"" << c << "\" fill-opacity=\"0.3\" stroke=\"" << c << "\"/>\n";
    o << "<line x1=\"" << cx - 25 << "\" y1=\"" << med << "\" x2=\"" << cx + 25 << "\" y2=\"" << med
      << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
    for (std::size_t k = 0; k < v.size(); ++k) {
      const double jitter = (static_cast<double>(k % 7) - 3.0) * 4.0;
      o << "<circle cx=\"" << cx + jitter << "\" cy=\"" << a.y(v[k]) << "\" r=\"2.5\" fill=\"" << c << "\"/>\n";
    }
    o << "<text x=\"" << cx << "\" y=\"378\" text-anchor=\"middle\">" << to_string(modes[i]) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string trajectory_svg(const std::vector<TrajectoryPanel>& panels) {
  constexpr int kCols = 5;
  constexpr double kPanel = 180.0;
  constexpr double kPad = 20.0;
  const int rows = panels.empty() ? 1 : static_cast<int>((panels.size() + kCols - 1) / kCols);
  const double width = kCols * kPanel;
  const double height = rows * kPanel + 30.0;

  // shared square view around start (0,0) and goal (1,0)
  double lo = -0.5, hi = 1.5;
  for (const auto& p : panels) {
    auto grow = [&](const std::vector<Eigen::Vector2d>& path) {
      for (const auto& v : path) {
        lo = std::min({lo, v.x(), v.y()});
        hi = std::max({hi, v.x(), v.y()});
      }
    };
    grow(p.pre);
    for (const auto& [m, path] : p.post) grow(path);
  }
  const double scale = (kPanel - 2 * kPad) / (hi - lo);

  std::ostringstream o;
  o << std::fixed << std::setprecision(2);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < panels.size(); ++i) {
    const auto& p = panels[i];
    const double ox = static_cast<double>(i % kCols) * kPanel;
    const double oy = static_cast<double>(i / kCols) * kPanel;
    auto px = [&](double x) { return ox + kPad + (x - lo) * scale; };
    auto py = [&](double y) { return oy + kPanel - kPad - (y - lo) * scale; };
    auto polyline = [&](const std::vector<Eigen::Vector2d>& path, const char* colour, const char* dash) {
      o << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\"" << dash << " points=\"";
      for (const auto& v : path) o << px(v.x()) << ',' << py(v.y()) << ' ';
      o << "\"/>\n";
    };
    o << "<rect x=\"" << ox + 2 << "\" y=\"" << oy + 2 << "\" width=\"" << kPanel - 4 << "\" height=\"" << kPanel - 4
      << "\" fill=\"none\" stroke=\"#ccc\"/>\n";
    o << "<text x=\"" << ox + 6 << "\" y=\"" << oy + 14 << "\" font-size=\"10\">task " << p.task_id << "</text>\n";
    o << "<circle cx=\"" << px(1.0) << "\" cy=\"" << py(0.0) << "\" r=\"4\" fill=\"gold\" stroke=\"black\"/>\n";
    const double ax = px(0.0), ay = py(0.0);
    o << "<line x1=\"" << ax << "\" y1=\"" << ay << "\" x2=\"" << ax + 25 * std::cos(p.logged_param) << "\" y2=\""
      << ay - 25 * std::sin(p.logged_param) << "\" stroke=\"#999\" stroke-width=\"3\"/>\n";
    polyline(p.pre, "#555555", " stroke-dasharray=\"3,3\"");
    for (const auto& [m, path] : p.post) polyline(path, mode_colour(m), "");
  }
  double lx = 10.0;
  const double ly = height - 10.0;
  o << "<text x=\"" << lx << "\" y=\"" << ly << "\" font-size=\"11\" fill=\"#555555\">pre-update (dashed)</text>\n";
  lx += 130.0;
  for (Mode m : kAllModes) {
    o << "<text x=\"" << lx << "\" y=\"" << ly << "\" font-size=\"11\" fill=\"" << mode_colour(m) << "\">"
      << to_string(m) << "</text>\n";
    lx += 80.0;
  }
  o << "<text x=\"" << lx << "\" y=\"" << ly << "\" font-size=\"11\" fill=\"#999\">grey bar: force direction</text>\n";
  o << "</svg>\n";
  return o.str();
}

ReportOutputs cmd_report(const fs::path& metrics_csv, const fs::path& out_dir) {
  const std::vector<EvalRecord> records = read_metrics(metrics_csv);
  fs::create_directories(out_dir);
  ReportOutputs out{summarize(records), out_dir / "summary.txt", out_dir / "per_task.svg",
                    out_dir / "distribution.svg"};
  std::ofstream(out.table) << format_summary(out.summary);
  std::ofstream(out.per_task_plot) << per_task_svg(records);
  std::ofstream(out.distribution_plot) << distribution_svg(records);
  return out;
}

}  // namespace mwcnp::harness
