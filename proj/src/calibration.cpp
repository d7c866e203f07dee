#include "tsdiff/calibration.hpp"

#include <algorithm>
#include <cmath>

namespace tsdiff {

Ecdf::Ecdf(std::vector<double> samples) : sorted_(std::move(samples)) {
  if (sorted_.empty()) throw std::invalid_argument("ECDF needs at least one sample");
  for (double v : sorted_)
    if (!std::isfinite(v)) throw std::invalid_argument("ECDF samples must be finite");
  std::sort(sorted_.begin(), sorted_.end());
}

double Ecdf::operator()(double v) const {
  const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), v);
  return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
}

double Ecdf::inverse(double u) const {
  if (!(u >= 0.0 && u <= 1.0)) throw std::invalid_argument("inverse ECDF: u must lie in [0, 1]");
  // F(x_(k)) >= u for the k-th order statistic iff k >= u n; the guard below
  // absorbs rounding in u n when u came from k / n.
  const auto n = static_cast<double>(sorted_.size());
  auto k = static_cast<std::size_t>(std::ceil(u * n));
  if (k > 0 && static_cast<double>(k - 1) / n >= u) --k;
  return sorted_[k == 0 ? 0 : k - 1];
}

double Ecdf::inverse_interpolated(double u) const {
  if (!(u >= 0.0 && u <= 1.0)) throw std::invalid_argument("inverse ECDF: u must lie in [0, 1]");
  const auto n = sorted_.size();
  const double pos = u * static_cast<double>(n) - 1.0;  // position i/n maps to index i-1
  if (pos <= 0.0) return sorted_.front();
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  if (lo + 1 >= n) return sorted_.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted_[lo] + frac * (sorted_[lo + 1] - sorted_[lo]);
}

Ecdf fit_ecdf(std::span<const double> samples) { return Ecdf(std::vector<double>(samples.begin(), samples.end())); }

MarginalCalibrator::MarginalCalibrator(std::vector<Ecdf> real, std::vector<Ecdf> model)
    : real_(std::move(real)), model_(std::move(model)) {
  if (real_.size() != model_.size())
    throw ShapeError("calibrator: " + std::to_string(real_.size()) + " real columns vs " +
                     std::to_string(model_.size()) + " model columns");
  if (real_.empty()) throw std::invalid_argument("calibrator needs at least one column");
}

double MarginalCalibrator::map(std::size_t t, double x, const CalibrationOptions& opt) const {
  const double u = model_.at(t)(x);
  return opt.interpolate ? real_[t].inverse_interpolated(u) : real_[t].inverse(u);
}

namespace {

std::vector<Ecdf> column_ecdfs(const RowMatrix& m) {
  std::vector<Ecdf> out;
  out.reserve(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index t = 0; t < m.cols(); ++t) {
    std::vector<double> col(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) col[static_cast<std::size_t>(i)] = m(i, t);
    out.emplace_back(std::move(col));
  }
  return out;
}

}  // namespace

MarginalCalibrator build_calibrator(const RowMatrix& real, const RowMatrix& synthetic) {
  if (real.cols() != synthetic.cols())
    throw ShapeError("calibration: real data has T = " + std::to_string(real.cols()) + " but synthetic has T = " +
                     std::to_string(synthetic.cols()));
  return MarginalCalibrator(column_ecdfs(real), column_ecdfs(synthetic));
}

MarginalCalibrator build_calibrator(const ProfileSet& real, const ProfileSet& synthetic) {
  return build_calibrator(real.data(), synthetic.data());
}

RowMatrix calibrate(const MarginalCalibrator& cal, const RowMatrix& x, const CalibrationOptions& opt) {
  if (static_cast<std::size_t>(x.cols()) != cal.columns())
    throw ShapeError("calibration: input has T = " + std::to_string(x.cols()) + " but the calibrator has T = " +
                     std::to_string(cal.columns()));
  RowMatrix out(x.rows(), x.cols());
  for (Eigen::Index t = 0; t < x.cols(); ++t)
    for (Eigen::Index i = 0; i < x.rows(); ++i) out(i, t) = cal.map(static_cast<std::size_t>(t), x(i, t), opt);
  return out;
}

ProfileSet calibrate(const MarginalCalibrator& cal, const ProfileSet& x, const CalibrationOptions& opt) {
  return ProfileSet(calibrate(cal, x.data(), opt), x.resolution(), x.unit_label());
}

Container MarginalCalibrator::to_container() const {
  Container c;
  c.set("kind", std::string("calibrator"));
  c.set("columns", std::uint64_t{real_.size()});
  for (std::size_t t = 0; t < real_.size(); ++t) {
    c.add("real/" + std::to_string(t), {real_[t].size()}, real_[t].sorted_values());
    c.add("model/" + std::to_string(t), {model_[t].size()}, model_[t].sorted_values());
  }
  return c;
}

MarginalCalibrator MarginalCalibrator::from_container(const Container& c) {
  if (c.get("kind") != "calibrator") throw FormatError("file is a '" + c.get("kind") + "', not a calibrator");
  const auto cols = c.get_u64("columns");
  std::vector<Ecdf> real, model;
  for (std::uint64_t t = 0; t < cols; ++t) {
    for (auto* dst : {&real, &model}) {
      const auto& tensor = c.tensor((dst == &real ? "real/" : "model/") + std::to_string(t));
      if (tensor.data.empty() || !std::is_sorted(tensor.data.begin(), tensor.data.end()))
        throw FormatError("calibrator column " + std::to_string(t) + " is empty or unsorted");
      dst->emplace_back(tensor.data);
    }
  }
  return MarginalCalibrator(std::move(real), std::move(model));
}

void save_calibrator(const MarginalCalibrator& cal, const std::filesystem::path& path) {
  cal.to_container().write(path);
}

MarginalCalibrator load_calibrator(const std::filesystem::path& path) {
  return MarginalCalibrator::from_container(Container::read(path));
}

}  // namespace tsdiff
