// Copyright 2026 The trajlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace trajlab {

struct ScalingPoint {
  double capacity = 0.0;
  double performance = 0.0;
};

// Size-vs-performance points ordered by strictly increasing capacity.
struct ScalingSeries {
  std::vector<ScalingPoint> points;

  /// Throws InvalidArgument for < 3 points, non-increasing capacity or
  /// non-finite performance.
  void validate() const;
  std::vector<double> performance() const;
};

enum class ResidualMode {
  Endpoints,  // deviation from the line through the first and last points
  OLSFit,     // deviation from the least-squares line
};

std::string_view to_string(ResidualMode mode) noexcept;
ResidualMode parse_residual_mode(std::string_view name);

/// sign(argmax - argmin) * (max - min), smallest index on ties.
double improvement(std::span<const double> y);
double improvement(const ScalingSeries& series);

/// Residuals against a line over the point index 0..n-1.
std::vector<double> residuals(std::span<const double> y, ResidualMode mode);

struct ScalingVerdict {
  double improvement = 0.0;       // I
  double linearity = 0.0;         // L = I / sqrt(max(mean z^2, eps^2))
  double breakthroughness = 0.0;  // B = I / sqrt(max(median z^2, eps^2))
  std::vector<double> residuals;
  ResidualMode mode = ResidualMode::Endpoints;
  bool linearity_saturated = false;  // the eps floor was hit
  bool breakthroughness_saturated = false;
};

ScalingVerdict metrics(const ScalingSeries& series, ResidualMode mode = ResidualMode::Endpoints,
                       double epsilon = 1e-9);

struct NamedScalingSeries {
  std::string task_id;
  ScalingSeries series;
};

struct TaskRanking {
  std::vector<std::string> by_linearity;         // descending L, ties by task_id
  std::vector<std::string> by_breakthroughness;  // descending B, ties by task_id
  std::vector<std::pair<std::string, ScalingVerdict>> verdicts;  // sorted by task_id
};

TaskRanking rank_tasks(std::span<const NamedScalingSeries> tasks, ResidualMode mode = ResidualMode::Endpoints,
                       double epsilon = 1e-9);

/// Reads (task_id, capacity, accuracy) rows; points are grouped per task and
/// sorted by capacity.
std::vector<NamedScalingSeries> read_scaling_csv(const std::filesystem::path& path);

/// task_id, I, L, B, mode, saturated, rank_L, rank_B.
void write_scaling_csv(const std::filesystem::path& path, const TaskRanking& ranking);

}  // namespace trajlab
