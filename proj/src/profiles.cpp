#include "tsdiff/profiles.hpp"

#include "tsdiff/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace tsdiff {

std::size_t steps_per_day(Resolution res) {
  switch (res) {
    case Resolution::Min1: return 1440;
    case Resolution::Min15: return 96;
    case Resolution::Min30: return 48;
    case Resolution::Hour1: return 24;
  }
  throw std::invalid_argument("unknown resolution");
}

std::chrono::seconds step_duration(Resolution res) {
  return std::chrono::seconds(86400 / static_cast<long>(steps_per_day(res)));
}

std::string to_string(Resolution res) {
  switch (res) {
    case Resolution::Min1: return "1min";
    case Resolution::Min15: return "15min";
    case Resolution::Min30: return "30min";
    case Resolution::Hour1: return "1hour";
  }
  throw std::invalid_argument("unknown resolution");
}

Resolution parse_resolution(std::string_view text) {
  if (text == "1min") return Resolution::Min1;
  if (text == "15min") return Resolution::Min15;
  if (text == "30min") return Resolution::Min30;
  if (text == "1hour") return Resolution::Hour1;
  throw std::invalid_argument("unknown resolution '" + std::string(text) +
                              "' (expected 1min, 15min, 30min or 1hour)");
}

ProfileSet::ProfileSet(RowMatrix data, Resolution res, std::string unit_label)
    : data_(std::move(data)), resolution_(res), unit_label_(std::move(unit_label)) {
  const auto t = steps_per_day(res);
  if (static_cast<std::size_t>(data_.cols()) != t && data_.rows() > 0) {
    throw ShapeError("profile width " + std::to_string(data_.cols()) + " does not match " +
                     to_string(res) + " resolution (" + std::to_string(t) + ")");
  }
  if (data_.rows() == 0) data_.resize(0, static_cast<Eigen::Index>(t));
  if (!data_.allFinite()) throw std::invalid_argument("profile data contains NaN or Inf");
}

ProfileSet ProfileSet::select(const std::vector<std::size_t>& rows) const {
  RowMatrix out(static_cast<Eigen::Index>(rows.size()), data_.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= size()) throw std::out_of_range("ProfileSet::select: row out of range");
    out.row(static_cast<Eigen::Index>(i)) = data_.row(static_cast<Eigen::Index>(rows[i]));
  }
  return ProfileSet(std::move(out), resolution_, unit_label_);
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

ProfileSet load_csv(const std::filesystem::path& path, Resolution res, bool skip_header) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open input file '" + path.string() + "'");

  const auto t = steps_per_day(res);
  std::vector<double> values;
  std::size_t row = 0;
  std::string line;
  if (skip_header) std::getline(in, line);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::size_t col = 0;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      const auto cell = trim(rest.substr(0, comma));
      double v = 0.0;
      const auto* end = cell.data() + cell.size();
      const auto [ptr, ec] = std::from_chars(cell.data(), end, v);
      if (cell.empty() || ec != std::errc() || ptr != end) {
        throw ParseError("row " + std::to_string(row) + ", column " + std::to_string(col) +
                             ": cannot parse '" + std::string(cell) + "' as a number",
                         row, col);
      }
      if (!std::isfinite(v)) {
        throw ParseError("row " + std::to_string(row) + ", column " + std::to_string(col) +
                             ": non-finite value",
                         row, col);
      }
      values.push_back(v);
      ++col;
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (col != t) {
      throw ParseError("row " + std::to_string(row) + ": expected " + std::to_string(t) +
                           ", got " + std::to_string(col),
                       row);
    }
    ++row;
  }

  RowMatrix data = Eigen::Map<RowMatrix>(values.data(), static_cast<Eigen::Index>(row),
                                         static_cast<Eigen::Index>(t));
  return ProfileSet(std::move(data), res);
}

void write_csv(const std::filesystem::path& path, const RowMatrix& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  char buf[32];
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", data(i, j));
      if (j) out << ',';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

namespace {

std::string format_time(std::chrono::sys_seconds t) {
  using namespace std::chrono;
  const auto day = floor<days>(t);
  const year_month_day ymd(day);
  const hh_mm_ss hms(t - day);
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02ld:%02ld:%02lldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                static_cast<long long>(hms.seconds().count()));
  return buf;
}

}  // namespace

DailySplit split_daily(const std::vector<TimedValue>& series, Resolution res) {
  const auto step = step_duration(res);
  for (std::size_t i = 1; i < series.size(); ++i) {
    const auto dt = series[i].time - series[i - 1].time;
    if (dt != step) {
      const char* kind = dt <= std::chrono::seconds(0) ? "duplicate or out-of-order" : "gap at";
      throw ParseError(std::string(kind) + " timestamp " + format_time(series[i].time) +
                           " (index " + std::to_string(i) + ")",
                       i);
    }
  }

  const auto t = steps_per_day(res);
  std::size_t start = 0;
  while (start < series.size() &&
         series[start].time.time_since_epoch().count() % 86400 != 0) {
    ++start;
  }
  const std::size_t days = start < series.size() ? (series.size() - start) / t : 0;

  RowMatrix data(static_cast<Eigen::Index>(days), static_cast<Eigen::Index>(t));
  for (std::size_t d = 0; d < days; ++d) {
    for (std::size_t j = 0; j < t; ++j) {
      data(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j)) =
          series[start + d * t + j].value;
    }
  }

  DailySplit out{ProfileSet(std::move(data), res), {}};
  if (days == 0) {
    out.warnings.push_back("no complete day in " + std::to_string(series.size()) + " samples");
  }
  return out;
}

ScalingParams fit_scaler(const ProfileSet& ps) {
  if (ps.empty()) throw std::invalid_argument("fit_scaler: empty profile set");
  ScalingParams sp{ps.data().minCoeff(), ps.data().maxCoeff()};
  if (!(sp.max_val > sp.min_val)) {
    throw NumericError("degenerate scale: all values equal " + std::to_string(sp.min_val));
  }
  return sp;
}

double scale_value(double x, const ScalingParams& sp) {
  return 2.0 * (x - sp.min_val) / (sp.max_val - sp.min_val) - 1.0;
}

double unscale_value(double y, const ScalingParams& sp) {
  return (y + 1.0) / 2.0 * (sp.max_val - sp.min_val) + sp.min_val;
}

ProfileSet scale(const ProfileSet& ps, const ScalingParams& sp) {
  RowMatrix out = ps.data().unaryExpr([&](double x) { return scale_value(x, sp); });
  return ProfileSet(std::move(out), ps.resolution(), "scaled");
}

ProfileSet unscale(const ProfileSet& ps, const ScalingParams& sp) {
  RowMatrix out = ps.data().unaryExpr([&](double y) { return unscale_value(y, sp); });
  return ProfileSet(std::move(out), ps.resolution(), "W");
}

std::pair<ProfileSet, ProfileSet> train_eval_split(const ProfileSet& ps, double fraction,
                                                   std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("train_eval_split: fraction must lie in (0, 1)");
  }
  const std::size_t n = ps.size();
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train >= n) {
    throw std::invalid_argument("train_eval_split: fraction " + std::to_string(fraction) +
                                " of " + std::to_string(n) + " rows leaves an empty split");
  }

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    std::swap(idx[i], idx[rng.below(i + 1)]);
  }
  std::vector<std::size_t> train(idx.begin(), idx.begin() + static_cast<long>(n_train));
  std::vector<std::size_t> eval(idx.begin() + static_cast<long>(n_train), idx.end());
  std::sort(train.begin(), train.end());
  std::sort(eval.begin(), eval.end());
  return {ps.select(train), ps.select(eval)};
}

}  // namespace tsdiff
