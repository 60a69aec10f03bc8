#pragma once

// Scenario files: declarations of manifolds, nets, sampled maps, kernels,
// test families and test functions, followed by a list of operations. The
// runner validates everything before executing anything. Format reference:
// docs/scenario.md.

#include "cgf/types.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace cgf {

/// Malformed scenario: bad JSON, unknown operation, missing or dangling
/// reference, unparsable expression. The CLI exits with status 2.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// An operation failed while running; the message names the operation.
/// The CLI exits with status 1.
class ExecutionError : public Error {
 public:
  using Error::Error;
};

struct RunOptions {
  std::optional<unsigned> seed;
  std::optional<EpsGrid> grid;
  std::optional<std::string> tolerance_profile;
};

struct RunResult {
  nlohmann::json report;
  std::map<std::string, std::string> series;  // file name -> CSV text
  bool inconclusive = false;
};

nlohmann::json load_scenario(const std::filesystem::path& file);

/// Throws SchemaError; returns normally when the scenario can be run.
void validate_scenario(const nlohmann::json& scenario, const std::filesystem::path& base_dir = ".",
                       const RunOptions& opts = {});

RunResult run_scenario(const nlohmann::json& scenario, const std::filesystem::path& base_dir = ".",
                       const RunOptions& opts = {});

/// report.json, meta.json and series/*.csv under `out_dir`.
void write_outputs(const RunResult& result, const nlohmann::json& meta, const std::filesystem::path& out_dir);

/// "e0,r,J" as used on the command line.
EpsGrid parse_eps_grid(const std::string& text);

}  // namespace cgf
