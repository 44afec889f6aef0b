#include "piml/piml.h"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <cstring>
#include <new>
#include <string>
#include <vector>

#include "piml/error.hpp"
#include "piml/experiment.hpp"
#include "piml/moo.hpp"

struct piml_context {
  std::string error;
};

struct piml_experiment {
  piml::ExperimentConfig config;
};

namespace {

piml_status fail(piml_context* ctx, piml_status status, const char* what) {
  ctx->error = what;
  return status;
}

template <typename F>
piml_status guarded(piml_context* ctx, F&& body) {
  if (ctx == nullptr) return PIML_ERR_VALIDATION;
  ctx->error.clear();
  try {
    body();
    return PIML_OK;
  } catch (const piml::Error& e) {
    switch (e.kind()) {
      case piml::ErrorKind::validation: return fail(ctx, PIML_ERR_VALIDATION, e.what());
      case piml::ErrorKind::numerical: return fail(ctx, PIML_ERR_NUMERICAL, e.what());
      case piml::ErrorKind::io: return fail(ctx, PIML_ERR_IO, e.what());
    }
    return fail(ctx, PIML_ERR_INTERNAL, e.what());
  } catch (const piml::Json::exception& e) {
    return fail(ctx, PIML_ERR_VALIDATION, e.what());
  } catch (const std::bad_alloc&) {
    return fail(ctx, PIML_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(ctx, PIML_ERR_INTERNAL, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(const piml::Json& j, char** out) {
  if (out != nullptr) *out = dup_string(j.dump(2));
}

void require(const void* p, const char* what) {
  if (p == nullptr) piml::fail_validation(std::string(what) + " is NULL");
}

piml::Vec row(const double* data, std::size_t dim) {
  return Eigen::Map<const piml::Vec>(data, static_cast<Eigen::Index>(dim));
}

piml_stop to_c(piml::StopReason r) {
  switch (r) {
    case piml::StopReason::none: return PIML_STOP_NONE;
    case piml::StopReason::stationary: return PIML_STOP_STATIONARY;
    case piml::StopReason::gradient_vanished: return PIML_STOP_GRADIENT_VANISHED;
    case piml::StopReason::conflict_threshold: return PIML_STOP_CONFLICT_THRESHOLD;
    case piml::StopReason::epoch_limit: return PIML_STOP_EPOCH_LIMIT;
  }
  return PIML_STOP_NONE;
}

}  // namespace

extern "C" {

const char* piml_version(void) { return "0.1.0"; }

piml_context* piml_context_new(void) { return new (std::nothrow) piml_context{}; }

void piml_context_free(piml_context* ctx) { delete ctx; }

const char* piml_last_error(const piml_context* ctx) {
  return ctx == nullptr ? "null context" : ctx->error.c_str();
}

void piml_string_free(char* s) { std::free(s); }

piml_status piml_min_norm(piml_context* ctx, const double* grads, size_t n_obj, size_t dim,
                          double* weights_out, double* point_out) {
  return guarded(ctx, [&] {
    require(grads, "grads");
    if (n_obj == 0 || dim == 0) piml::fail_validation("need at least one objective and dimension");
    std::vector<piml::Vec> rows;
    for (std::size_t j = 0; j < n_obj; ++j) rows.push_back(row(grads + j * dim, dim));
    const auto r = piml::frank_wolfe_min_norm(piml::GradientSet(std::move(rows)));
    if (weights_out != nullptr) std::copy(r.weights.alpha.begin(), r.weights.alpha.end(), weights_out);
    if (point_out != nullptr) std::copy(r.point.data(), r.point.data() + dim, point_out);
  });
}

piml_status piml_combine(piml_context* ctx, piml_method method, const double* g_data,
                         const double* g_physics, size_t dim, double conflict_threshold,
                         double gradient_threshold, double* direction_out, piml_stop* stop_out) {
  return guarded(ctx, [&] {
    require(g_data, "g_data");
    require(g_physics, "g_physics");
    require(direction_out, "direction_out");
    if (dim == 0) piml::fail_validation("dimension must be positive");
    const piml::GradientSet set({row(g_data, dim), row(g_physics, dim)});
    piml::DcgdConfig cfg;
    cfg.conflict_threshold = conflict_threshold;
    cfg.gradient_threshold = gradient_threshold;
    piml::CombineOutcome out;
    switch (method) {
      case PIML_METHOD_TMGD: out = piml::tmgd_combine(set); break;
      case PIML_METHOD_DCGD_CENTER: cfg.validate(); out = piml::dcgd_center(set, cfg); break;
      case PIML_METHOD_DCGD_AVG: cfg.validate(); out = piml::dcgd_average(set, cfg); break;
      case PIML_METHOD_DCGD_PROJ: cfg.validate(); out = piml::dcgd_projection(set, cfg); break;
      case PIML_METHOD_SCALARIZED:
      default: piml::fail_validation("method has no gradient combiner");
    }
    std::copy(out.direction.data(), out.direction.data() + dim, direction_out);
    if (stop_out != nullptr) *stop_out = to_c(out.stop);
  });
}

piml_status piml_idm_acceleration(piml_context* ctx, const double* params, double v, double dv,
                                  double h, double* accel_out) {
  return guarded(ctx, [&] {
    require(params, "params");
    require(accel_out, "accel_out");
    std::array<double, piml::IdmParams::kCount> a{};
    std::copy(params, params + a.size(), a.begin());
    const auto p = piml::IdmParams::from_array(a);
    p.validate();
    *accel_out = piml::idm_acceleration({v, dv, h}, p);
  });
}

piml_status piml_experiment_load(piml_context* ctx, const char* path, const char* overrides_json,
                                 piml_experiment** out) {
  return guarded(ctx, [&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    piml::Json overrides = piml::Json::object();
    if (overrides_json != nullptr && *overrides_json != '\0') {
      overrides = piml::Json::parse(overrides_json);
    }
    *out = new piml_experiment{piml::load_experiment(path, overrides)};
  });
}

piml_status piml_experiment_parse(piml_context* ctx, const char* config_json,
                                  piml_experiment** out) {
  return guarded(ctx, [&] {
    require(config_json, "config_json");
    require(out, "out");
    *out = nullptr;
    *out = new piml_experiment{piml::parse_experiment(piml::Json::parse(config_json))};
  });
}

void piml_experiment_free(piml_experiment* exp) { delete exp; }

piml_status piml_experiment_resolved(piml_context* ctx, const piml_experiment* exp,
                                     char** json_out) {
  return guarded(ctx, [&] {
    require(exp, "experiment");
    require(json_out, "json_out");
    emit(piml::experiment_to_json(exp->config), json_out);
  });
}

piml_status piml_cmd_simulate(piml_context* ctx, const piml_experiment* exp, char** result_json) {
  return guarded(ctx, [&] {
    require(exp, "experiment");
    emit(piml::cmd_simulate(exp->config), result_json);
  });
}

piml_status piml_cmd_calibrate(piml_context* ctx, const piml_experiment* exp, char** result_json) {
  return guarded(ctx, [&] {
    require(exp, "experiment");
    emit(piml::cmd_calibrate(exp->config), result_json);
  });
}

piml_status piml_cmd_train(piml_context* ctx, const piml_experiment* exp, char** result_json) {
  return guarded(ctx, [&] {
    require(exp, "experiment");
    emit(piml::cmd_train(exp->config), result_json);
  });
}

piml_status piml_cmd_eval(piml_context* ctx, const piml_experiment* exp, const char* target,
                          const char* data_path, char** result_json) {
  return guarded(ctx, [&] {
    require(exp, "experiment");
    require(target, "target");
    emit(piml::cmd_eval(exp->config, target, data_path == nullptr ? "" : data_path), result_json);
  });
}

piml_status piml_cmd_sweep(piml_context* ctx, const piml_experiment* exp, char** result_json) {
  return guarded(ctx, [&] {
    require(exp, "experiment");
    emit(piml::cmd_sweep(exp->config), result_json);
  });
}

piml_status piml_cmd_compare(piml_context* ctx, const piml_experiment* exp, char** result_json) {
  return guarded(ctx, [&] {
    require(exp, "experiment");
    emit(piml::cmd_compare(exp->config), result_json);
  });
}

piml_status piml_cmd_oracle(piml_context* ctx, int instances, uint64_t seed, double grid_step,
                            char** result_json) {
  return guarded(ctx, [&] { emit(piml::cmd_oracle(instances, seed, grid_step), result_json); });
}

}  // extern "C"
