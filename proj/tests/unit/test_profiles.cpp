#include "tsdiff/profiles.hpp"
#include "tsdiff/rng.hpp"

#include "../support/temp_dir.hpp"

#include <doctest.h>

#include <fstream>
#include <set>

using namespace tsdiff;

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string csv_rows(std::size_t rows, std::size_t cols, double base = 0.0) {
  std::string out;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (j) out += ',';
      out += std::to_string(base + static_cast<double>(i * cols + j));
    }
    out += '\n';
  }
  return out;
}

std::vector<TimedValue> hourly(std::int64_t start_epoch, std::size_t n) {
  std::vector<TimedValue> s;
  for (std::size_t i = 0; i < n; ++i) {
    s.push_back({std::chrono::sys_seconds(std::chrono::seconds(start_epoch + 3600 * static_cast<std::int64_t>(i))),
                 static_cast<double>(i)});
  }
  return s;
}

}  // namespace

TEST_CASE("resolution table") {
  CHECK(steps_per_day(Resolution::Min1) == 1440);
  CHECK(steps_per_day(Resolution::Min15) == 96);
  CHECK(steps_per_day(Resolution::Min30) == 48);
  CHECK(steps_per_day(Resolution::Hour1) == 24);
  for (auto r : {Resolution::Min1, Resolution::Min15, Resolution::Min30, Resolution::Hour1}) {
    CHECK(parse_resolution(to_string(r)) == r);
  }
  CHECK_THROWS_AS(parse_resolution("5min"), std::invalid_argument);
}

TEST_CASE("load_csv shapes and errors") {
  TempDir dir;
  SUBCASE("2 x 24 hourly") {
    write_text(dir / "a.csv", csv_rows(2, 24));
    const auto ps = load_csv(dir / "a.csv", Resolution::Hour1);
    CHECK(ps.size() == 2);
    CHECK(ps.steps() == 24);
    CHECK(ps.data()(1, 0) == 24.0);
  }
  SUBCASE("3 x 1440 minutely") {
    write_text(dir / "b.csv", csv_rows(3, 1440));
    const auto ps = load_csv(dir / "b.csv", Resolution::Min1);
    CHECK(ps.size() == 3);
    CHECK(ps.steps() == 1440);
  }
  SUBCASE("short row names the row") {
    write_text(dir / "c.csv", csv_rows(1, 23));
    try {
      load_csv(dir / "c.csv", Resolution::Hour1);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()) == "row 0: expected 24, got 23");
      CHECK(e.row() == 0);
    }
  }
  SUBCASE("non-numeric cell reports its location") {
    std::string text = csv_rows(1, 24);
    text += "1,2,x";
    for (int i = 3; i < 24; ++i) text += ",0";
    write_text(dir / "d.csv", text + "\n");
    try {
      load_csv(dir / "d.csv", Resolution::Hour1);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.row() == 1);
      CHECK(e.column() == 2);
    }
  }
  SUBCASE("header is skipped on request") {
    std::string header = "h0";
    for (int i = 1; i < 24; ++i) header += ",h" + std::to_string(i);
    write_text(dir / "e.csv", header + "\n" + csv_rows(2, 24));
    CHECK_THROWS_AS(load_csv(dir / "e.csv", Resolution::Hour1), ParseError);
    CHECK(load_csv(dir / "e.csv", Resolution::Hour1, true).size() == 2);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_csv(dir / "nope.csv", Resolution::Hour1), ConfigError);
  }
}

TEST_CASE("write_csv round-trips exactly") {
  TempDir dir;
  Rng rng(3);
  RowMatrix m(4, 24);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * 1234.5678;
  write_csv(dir / "x.csv", m);
  const auto ps = load_csv(dir / "x.csv", Resolution::Hour1);
  CHECK(ps.data() == m);
}

TEST_CASE("split_daily") {
  const std::int64_t midnight = 1700006400;  // 2023-11-15T00:00:00Z
  REQUIRE(midnight % 86400 == 0);

  SUBCASE("exact two days") {
    const auto d = split_daily(hourly(midnight, 48), Resolution::Hour1);
    CHECK(d.profiles.size() == 2);
    CHECK(d.profiles.steps() == 24);
    CHECK(d.warnings.empty());
  }
  SUBCASE("trailing partial day dropped") {
    const auto d = split_daily(hourly(midnight, 30), Resolution::Hour1);
    CHECK(d.profiles.size() == 1);
  }
  SUBCASE("leading partial day dropped") {
    const auto d = split_daily(hourly(midnight - 5 * 3600, 5 + 48), Resolution::Hour1);
    REQUIRE(d.profiles.size() == 2);
    CHECK(d.profiles.data()(0, 0) == 5.0);
  }
  SUBCASE("no complete day gives an empty set and a warning") {
    const auto d = split_daily(hourly(midnight, 23), Resolution::Hour1);
    CHECK(d.profiles.size() == 0);
    CHECK(d.warnings.size() == 1);
  }
  SUBCASE("gap names the first offending timestamp") {
    auto s = hourly(midnight, 48);
    s.erase(s.begin() + 10);
    try {
      split_daily(s, Resolution::Hour1);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("2023-11-15T11:00:00Z") != std::string::npos);
    }
  }
  SUBCASE("duplicate timestamp") {
    auto s = hourly(midnight, 48);
    s[5].time = s[4].time;
    CHECK_THROWS_AS(split_daily(s, Resolution::Hour1), ParseError);
  }
  SUBCASE("rows re-concatenate to the covered days") {
    const auto s = hourly(midnight - 7 * 3600, 7 + 72 + 3);
    const auto d = split_daily(s, Resolution::Hour1);
    REQUIRE(d.profiles.size() == 3);
    for (std::size_t i = 0; i < 72; ++i) {
      CHECK(d.profiles.data()(static_cast<Eigen::Index>(i / 24), static_cast<Eigen::Index>(i % 24)) ==
            s[7 + i].value);
    }
  }
}

TEST_CASE("fit_scaler") {
  RowMatrix a = RowMatrix::Zero(1, 24);
  a(0, 3) = 10.0;
  auto sp = fit_scaler(ProfileSet(a, Resolution::Hour1));
  CHECK(sp.min_val == 0.0);
  CHECK(sp.max_val == 10.0);

  a(0, 5) = -2.0;
  a(0, 3) = 8.0;
  sp = fit_scaler(ProfileSet(a, Resolution::Hour1));
  CHECK(sp.min_val == -2.0);
  CHECK(sp.max_val == 8.0);

  CHECK_THROWS_AS(fit_scaler(ProfileSet(RowMatrix::Constant(2, 24, 5.0), Resolution::Hour1)), NumericError);
}

TEST_CASE("scale and unscale") {
  const ScalingParams sp{0.0, 10.0};
  CHECK(scale_value(0.0, sp) == -1.0);
  CHECK(scale_value(10.0, sp) == 1.0);
  CHECK(scale_value(2.5, sp) == -0.5);
  CHECK(scale_value(20.0, sp) == 3.0);

  const ScalingParams odd{-3.7, 1234.9};
  CHECK(scale_value(odd.min_val, odd) == -1.0);
  CHECK(scale_value(odd.max_val, odd) == 1.0);

  // property: round trip and monotonicity over random data
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    RowMatrix m(5, 24);
    const double spread = std::exp(rng.normal() * 3.0);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * spread + rng.normal();
    const ProfileSet ps(m, Resolution::Hour1);
    const auto fit = fit_scaler(ps);
    const auto back = unscale(scale(ps, fit), fit);
    const double range = fit.max_val - fit.min_val;
    CHECK((back.data() - m).cwiseAbs().maxCoeff() <= 1e-9 * range);
    for (Eigen::Index i = 1; i < m.size(); ++i) {
      const double x1 = m.data()[i - 1], x2 = m.data()[i];
      if (x1 < x2) CHECK(scale_value(x1, fit) < scale_value(x2, fit));
    }
  }
}

TEST_CASE("train_eval_split") {
  RowMatrix m(10, 24);
  for (Eigen::Index i = 0; i < 10; ++i) m.row(i).setConstant(static_cast<double>(i));
  const ProfileSet ps(m, Resolution::Hour1);

  const auto [train, eval] = train_eval_split(ps, 0.8, 7);
  CHECK(train.size() == 8);
  CHECK(eval.size() == 2);

  std::set<double> seen;
  for (Eigen::Index i = 0; i < 8; ++i) seen.insert(train.data()(i, 0));
  for (Eigen::Index i = 0; i < 2; ++i) seen.insert(eval.data()(i, 0));
  CHECK(seen.size() == 10);

  const auto [train2, eval2] = train_eval_split(ps, 0.8, 7);
  CHECK(train2.data() == train.data());
  CHECK(eval2.data() == eval.data());

  const ProfileSet one(RowMatrix::Zero(1, 24), Resolution::Hour1);
  CHECK_THROWS_AS(train_eval_split(one, 0.5, 1), std::invalid_argument);
  CHECK_THROWS_AS(train_eval_split(ps, 1.0, 1), std::invalid_argument);
}

TEST_CASE("ProfileSet invariants") {
  CHECK_THROWS_AS(ProfileSet(RowMatrix::Zero(2, 23), Resolution::Hour1), ShapeError);
  RowMatrix bad = RowMatrix::Zero(2, 24);
  bad(1, 1) = std::nan("");
  CHECK_THROWS_AS(ProfileSet(bad, Resolution::Hour1), std::invalid_argument);
}
