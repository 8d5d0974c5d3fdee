#include "mfl/mfl.h"

#include "mfl/harness.hpp"

#include <sstream>
#include <string>

static_assert(static_cast<int>(mfl::ErrorCode::IoError) == MFL_IO_ERROR);

struct mfl_flow {
  mfl::MetricFlow flow;
};

struct mfl_report {
  mfl::ReportBundle bundle;
  std::string text;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_scratch;

mfl_status fail(mfl_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <class Fn>
mfl_status guard(Fn fn) {
  try {
    g_last_error.clear();
    fn();
    return MFL_OK;
  } catch (const mfl::Error& e) {
    return fail(static_cast<mfl_status>(e.code()), e.what());
  } catch (const std::exception& e) {
    return fail(MFL_INTERNAL_ERROR, e.what());
  } catch (...) {
    return fail(MFL_INTERNAL_ERROR, "unknown failure");
  }
}

mfl::json parse(const char* text, const char* what) {
  if (!text) throw mfl::Error(mfl::ErrorCode::InvalidArgument, std::string(what) + " is null");
  try {
    return mfl::json::parse(text);
  } catch (const mfl::json::parse_error& e) {
    throw mfl::Error(mfl::ErrorCode::ConfigInvalid, std::string(what) + ": not valid JSON (" + e.what() + ")");
  }
}

}  // namespace

extern "C" {

const char* mfl_version(void) { return mfl::library_version(); }

const char* mfl_status_name(mfl_status status) {
  if (status == MFL_INTERNAL_ERROR) return "InternalError";
  if (status < MFL_OK || status > MFL_IO_ERROR) return "Unknown";
  return mfl::error_code_name(static_cast<mfl::ErrorCode>(status));
}

const char* mfl_last_error(void) { return g_last_error.c_str(); }

mfl_status mfl_flow_create(const char* flow_json, mfl_flow** out) {
  if (!out) return fail(MFL_INVALID_ARGUMENT, "out is null");
  *out = nullptr;
  return guard([&] {
    const mfl::FlowSpec spec = mfl::parse_flow_spec(parse(flow_json, "flow"));
    *out = new mfl_flow{spec.build()};
  });
}

void mfl_flow_destroy(mfl_flow* flow) { delete flow; }

mfl_status mfl_flow_dim(const mfl_flow* flow, int* dim, int* ambient_dim) {
  if (!flow) return fail(MFL_INVALID_ARGUMENT, "flow is null");
  if (dim) *dim = flow->flow.dim();
  if (ambient_dim) *ambient_dim = flow->flow.ambient_dim();
  return MFL_OK;
}

mfl_status mfl_flow_horizon(const mfl_flow* flow, double* horizon) {
  if (!flow || !horizon) return fail(MFL_INVALID_ARGUMENT, "null argument");
  *horizon = flow->flow.horizon();
  return MFL_OK;
}

mfl_status mfl_flow_distance(const mfl_flow* flow, double t, const double* x, const double* y, double* out) {
  if (!flow || !x || !y || !out) return fail(MFL_INVALID_ARGUMENT, "null argument");
  return guard([&] {
    const int n = flow->flow.ambient_dim();
    const mfl::Vec a = Eigen::Map<const Eigen::VectorXd>(x, n);
    const mfl::Vec b = Eigen::Map<const Eigen::VectorXd>(y, n);
    flow->flow.check_point(a);
    flow->flow.check_point(b);
    *out = flow->flow.dist(t, a, b);
  });
}

mfl_status mfl_config_normalize(const char* config_json, const char** out_json) {
  if (!out_json) return fail(MFL_INVALID_ARGUMENT, "out is null");
  *out_json = nullptr;
  return guard([&] {
    const mfl::ExperimentConfig cfg = mfl::parse_config(parse(config_json, "config"));
    g_scratch = mfl::config_to_json(cfg).dump(2);
    *out_json = g_scratch.c_str();
  });
}

mfl_status mfl_run(const char* config_json, const uint64_t* seed_override, mfl_report** out) {
  if (!out) return fail(MFL_INVALID_ARGUMENT, "out is null");
  *out = nullptr;
  return guard([&] {
    mfl::ExperimentConfig cfg = mfl::parse_config(parse(config_json, "config"));
    if (seed_override) cfg.mc.seed = *seed_override;
    auto* r = new mfl_report{mfl::run_experiment(cfg), {}};
    r->text = r->bundle.to_json().dump(2);
    *out = r;
  });
}

void mfl_report_destroy(mfl_report* report) { delete report; }

mfl_status mfl_report_json(const mfl_report* report, const char** out_json) {
  if (!report || !out_json) return fail(MFL_INVALID_ARGUMENT, "null argument");
  *out_json = report->text.c_str();
  return MFL_OK;
}

mfl_status mfl_report_error_count(const mfl_report* report, size_t* count) {
  if (!report || !count) return fail(MFL_INVALID_ARGUMENT, "null argument");
  *count = report->bundle.errors;
  return MFL_OK;
}

mfl_status mfl_report_emit(const mfl_report* report, const char* directory, const char* formats) {
  if (!report || !directory) return fail(MFL_INVALID_ARGUMENT, "null argument");
  return guard([&] {
    std::vector<std::string> list;
    std::stringstream ss(formats ? formats : "json");
    for (std::string item; std::getline(ss, item, ',');) {
      if (item.empty()) continue;
      if (item != "json" && item != "csv" && item != "svg") {
        throw mfl::Error(mfl::ErrorCode::ConfigInvalid, "format: unknown format " + item);
      }
      list.push_back(item);
    }
    mfl::emit_report(report->bundle, directory, list);
  });
}

}  // extern "C"
