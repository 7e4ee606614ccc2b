// Copyright 2026 The trajlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "trajlab/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "trajlab/csv.hpp"
#include "trajlab/error.hpp"
#include "trajlab/stats.hpp"

namespace trajlab {

void ScalingSeries::validate() const {
  if (points.size() < 3) throw Error(ErrorCode::InvalidArgument, "scaling series needs at least 3 points");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!std::isfinite(points[i].performance)) {
      throw Error(ErrorCode::InvalidArgument, "performance must be finite");
    }
    if (i > 0 && !(points[i].capacity > points[i - 1].capacity)) {
      throw Error(ErrorCode::InvalidArgument, "capacities must be strictly increasing");
    }
  }
}

std::vector<double> ScalingSeries::performance() const {
  std::vector<double> y;
  y.reserve(points.size());
  for (const auto& p : points) y.push_back(p.performance);
  return y;
}

std::string_view to_string(ResidualMode mode) noexcept {
  return mode == ResidualMode::Endpoints ? "endpoints" : "ols";
}

ResidualMode parse_residual_mode(std::string_view name) {
  if (name == "endpoints") return ResidualMode::Endpoints;
  if (name == "ols") return ResidualMode::OLSFit;
  throw Error(ErrorCode::InvalidArgument, "unknown residual mode '" + std::string(name) + "'");
}

double improvement(std::span<const double> y) {
  if (y.empty()) throw Error(ErrorCode::EmptyInput, "improvement of empty series");
  const auto hi = std::max_element(y.begin(), y.end());  // first maximum
  const auto lo = std::min_element(y.begin(), y.end());  // first minimum
  const auto direction = (hi - y.begin()) - (lo - y.begin());
  const double sign = direction > 0 ? 1.0 : (direction < 0 ? -1.0 : 0.0);
  return sign * (*hi - *lo);
}

double improvement(const ScalingSeries& series) {
  const auto y = series.performance();
  return improvement(y);
}

std::vector<double> residuals(std::span<const double> y, ResidualMode mode) {
  const std::size_t n = y.size();
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "residuals need at least 2 points");
  double intercept = y.front();
  double slope = (y.back() - y.front()) / static_cast<double>(n - 1);
  if (mode == ResidualMode::OLSFit) {
    if (n < 3) throw Error(ErrorCode::InvalidArgument, "OLS residuals need at least 3 points");
    const auto fit = stats::fit_line(y);
    intercept = fit.alpha;
    slope = fit.beta;
  }
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = y[i] - (intercept + slope * static_cast<double>(i));
  if (mode == ResidualMode::Endpoints) {
    z.front() = 0.0;
    z.back() = 0.0;
  }
  return z;
}

ScalingVerdict metrics(const ScalingSeries& series, ResidualMode mode, double epsilon) {
  series.validate();
  const auto y = series.performance();
  ScalingVerdict v;
  v.mode = mode;
  v.improvement = improvement(y);
  v.residuals = residuals(y, mode);
  std::vector<double> squared;
  for (double z : v.residuals) squared.push_back(z * z);
  const double floor = epsilon * epsilon;
  const double mean_sq = stats::mean(squared);
  const double median_sq = stats::median(squared);
  v.linearity_saturated = mean_sq < floor;
  v.breakthroughness_saturated = median_sq < floor;
  v.linearity = v.improvement / std::sqrt(std::max(mean_sq, floor));
  v.breakthroughness = v.improvement / std::sqrt(std::max(median_sq, floor));
  return v;
}

TaskRanking rank_tasks(std::span<const NamedScalingSeries> tasks, ResidualMode mode, double epsilon) {
  if (tasks.empty()) throw Error(ErrorCode::EmptyInput, "no tasks to rank");
  TaskRanking ranking;
  for (const auto& t : tasks) ranking.verdicts.emplace_back(t.task_id, metrics(t.series, mode, epsilon));
  std::sort(ranking.verdicts.begin(), ranking.verdicts.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  auto order_by = [&](auto key) {
    std::vector<std::size_t> idx(ranking.verdicts.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return key(ranking.verdicts[a].second) > key(ranking.verdicts[b].second);
    });
    std::vector<std::string> names;
    for (std::size_t i : idx) names.push_back(ranking.verdicts[i].first);
    return names;
  };
  ranking.by_linearity = order_by([](const ScalingVerdict& v) { return v.linearity; });
  ranking.by_breakthroughness = order_by([](const ScalingVerdict& v) { return v.breakthroughness; });
  return ranking;
}

std::vector<NamedScalingSeries> read_scaling_csv(const std::filesystem::path& path) {
  const auto rows = read_csv(path);
  if (rows.empty()) throw Error(ErrorCode::ParseError, path.string() + " is empty");
  const auto& header = rows.front();
  auto column = [&](std::string_view name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorCode::ParseError, path.string() + " lacks column " + std::string(name));
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t task_col = column("task_id");
  const std::size_t cap_col = column("capacity");
  const std::size_t acc_col = column("accuracy");
  std::map<std::string, std::vector<ScalingPoint>> grouped;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size()) {
      throw Error(ErrorCode::ParseError, path.string() + " row " + std::to_string(r + 1) + " has wrong field count");
    }
    try {
      grouped[row[task_col]].push_back({std::stod(row[cap_col]), std::stod(row[acc_col])});
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::ParseError, path.string() + " row " + std::to_string(r + 1) + " is not numeric");
    }
  }
  std::vector<NamedScalingSeries> out;
  for (auto& [task, points] : grouped) {
    std::stable_sort(points.begin(), points.end(),
                     [](const ScalingPoint& a, const ScalingPoint& b) { return a.capacity < b.capacity; });
    out.push_back({task, ScalingSeries{std::move(points)}});
  }
  return out;
}

void write_scaling_csv(const std::filesystem::path& path, const TaskRanking& ranking) {
  auto rank_of = [](const std::vector<std::string>& order, const std::string& task) {
    return static_cast<std::uint64_t>(std::find(order.begin(), order.end(), task) - order.begin() + 1);
  };
  CsvWriter csv(path, {"task_id", "I", "L", "B", "mode", "saturated", "rank_L", "rank_B"});
  for (const auto& [task, v] : ranking.verdicts) {
    csv.field(task)
        .field(v.improvement)
        .field(v.linearity)
        .field(v.breakthroughness)
        .field(to_string(v.mode))
        .field(v.linearity_saturated || v.breakthroughness_saturated)
        .field(rank_of(ranking.by_linearity, task))
        .field(rank_of(ranking.by_breakthroughness, task));
    csv.end_row();
  }
}

}  // namespace trajlab
