#pragma once

// Experiment configuration, dispatch and report emission.
//
// Config file (JSON):
//   { "schema_version": 1, "task": "...", "flow": {...}, "params": {...},
//     "mc": {"n_paths": N, "step": h, "seed": s},
//     "output": {"directory": "...", "formats": ["json", "csv", "svg"]} }
// Unknown keys anywhere are rejected with ConfigInvalid naming the field.

#include "mfl/inequalities.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace mfl {

using json = nlohmann::ordered_json;

constexpr int kSchemaVersion = 1;
const char* library_version() noexcept;

struct FlowSpec {
  std::string kind = "euclidean";  ///< euclidean, sphere, hyperbolic, torus, ricci_sphere
  int dim = 2;
  std::vector<TimeFactor> factors{TimeFactor::constant()};
  std::string drift = "zero";      ///< zero or linear_radial
  double lambda = 0.0;

  MetricFlow build() const;
  bool operator==(const FlowSpec&) const = default;
};

struct McSpec {
  std::size_t n_paths = 1000;
  double step = 1e-3;
  std::uint64_t seed = 0;
  bool operator==(const McSpec&) const = default;
};

struct OutputSpec {
  std::string directory = "mflab-out";
  std::vector<std::string> formats{"json"};
  bool operator==(const OutputSpec&) const = default;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::string task;  ///< simulate, gradient, couple, verify, nonexplosion, recover
  FlowSpec flow;
  json params = json::object();
  McSpec mc;
  OutputSpec output;

  bool operator==(const ExperimentConfig&) const = default;
};

/// The "flow" object alone.
FlowSpec parse_flow_spec(const json& j);

/// Parses and validates; throws ConfigInvalid with the offending field path.
ExperimentConfig parse_config(const json& j);
ExperimentConfig parse_config_text(const std::string& text);
json config_to_json(const ExperimentConfig& cfg);

/// Field builder from {"type": ..., ...}.
ScalarField field_from_json(const MetricFlow& flow, const json& j, const std::string& path = "f");

struct Table {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

struct Plot {
  std::string name;
  std::string x_label;
  std::string y_label;
  std::vector<std::vector<std::pair<double, double>>> lines;
};

struct ReportBundle {
  std::string version;
  ExperimentConfig config;
  json results = json::array();
  json diagnostics = json::array();
  std::vector<Table> tables;
  std::vector<Plot> plots;
  std::string created;
  std::size_t errors = 0;  ///< results recorded as errors

  json to_json() const;
};

/// Dispatches the task. MC-level failures become error results.
ReportBundle run_experiment(const ExperimentConfig& cfg);

/// Writes report.json, <table>.csv and <plot>.svg for the requested formats.
/// Returns the written paths.
std::vector<std::string> emit_report(const ReportBundle& bundle, const std::string& directory,
                                     const std::vector<std::string>& formats);

std::string table_to_csv(const Table& table);
std::string plot_to_svg(const Plot& plot, std::size_t max_lines = 50);

json verdict_to_json(const Verdict& v);
json estimate_to_json(const Estimate& e);

}  // namespace mfl
