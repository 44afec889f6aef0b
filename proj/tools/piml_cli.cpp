#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "piml/piml.h"

namespace {

using Json = nlohmann::ordered_json;

struct Common {
  std::string config;
  std::string task;
  std::string output;
  std::vector<std::string> sets;
  std::string method;
  double lr = 0.0;
  int epochs = -1;
  long long seed = -1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "JSON experiment config")->check(CLI::ExistingFile);
  cmd->add_option("--task", c.task, "lwr, carfollowing or toy (when no config file is given)");
  cmd->add_option("-o,--output", c.output, "output directory");
  cmd->add_option("--set", c.sets, "override a config field, e.g. train.learning_rate=0.01");
  cmd->add_option("--method", c.method, "training method");
  cmd->add_option("--lr", c.lr, "learning rate");
  cmd->add_option("--epochs", c.epochs, "maximum epochs");
  cmd->add_option("--seed", c.seed, "training seed");
}

// "a.b.c=value" -> {"a": {"b": {"c": value}}}; the value is read as JSON
// when it parses, otherwise as a string.
void apply_set(Json& patch, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw CLI::ValidationError("--set", "expected key.path=value, got '" + assignment + "'");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  Json* node = &patch;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      break;
    }
    if (!(*node)[key].is_object()) (*node)[key] = Json::object();
    node = &(*node)[key];
    start = dot + 1;
  }
}

Json overrides(const Common& c) {
  Json patch = Json::object();
  for (const auto& s : c.sets) apply_set(patch, s);
  if (!c.output.empty()) patch["output_dir"] = c.output;
  if (!c.method.empty()) patch["train"]["method"] = c.method;
  if (c.lr > 0.0) patch["train"]["learning_rate"] = c.lr;
  if (c.epochs >= 0) patch["train"]["max_epochs"] = c.epochs;
  if (c.seed >= 0) patch["train"]["seed"] = c.seed;
  return patch;
}

int exit_code(piml_status s) {
  switch (s) {
    case PIML_OK: return 0;
    case PIML_ERR_NUMERICAL: return 2;
    default: return 1;
  }
}

int report(piml_context* ctx, piml_status s, char* result) {
  if (s != PIML_OK) {
    std::fprintf(stderr, "error: %s\n", piml_last_error(ctx));
    return exit_code(s);
  }
  if (result != nullptr) {
    std::printf("%s\n", result);
    piml_string_free(result);
  }
  return 0;
}

// Builds the experiment from --config or --task plus overrides.
piml_status load(piml_context* ctx, const Common& c, piml_experiment** exp) {
  const Json patch = overrides(c);
  if (!c.config.empty()) {
    if (!c.task.empty()) {
      std::fprintf(stderr, "error: --task and --config are exclusive\n");
      return PIML_ERR_VALIDATION;
    }
    return piml_experiment_load(ctx, c.config.c_str(), patch.dump().c_str(), exp);
  }
  if (c.task.empty()) {
    std::fprintf(stderr, "error: give --config or --task\n");
    return PIML_ERR_VALIDATION;
  }
  Json j = {{"task", c.task}};
  j.merge_patch(patch);
  return piml_experiment_parse(ctx, j.dump().c_str(), exp);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-objective training of physics-informed traffic models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(piml_version()));

  Common common;
  std::string checkpoint;
  std::string data;
  int instances = 100;
  long long oracle_seed = 1;
  double step = 1e-3;

  const char* names[] = {"simulate", "calibrate", "train", "sweep", "compare"};
  const char* help[] = {"generate synthetic data", "calibrate the IDM with the GA",
                        "train one model", "scalarization weight sweep",
                        "compare methods and report relative improvement"};
  std::vector<CLI::App*> cmds;
  for (std::size_t i = 0; i < 5; ++i) {
    cmds.push_back(app.add_subcommand(names[i], help[i]));
    add_common(cmds.back(), common);
  }
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint or a directory of runs");
  add_common(eval, common);
  eval->add_option("--checkpoint", checkpoint, "checkpoint file or run directory")->required();
  eval->add_option("--data", data, "test data file (default: the config's test split)");
  CLI::App* oracle = app.add_subcommand("oracle", "check the min-norm solver by brute force");
  oracle->add_option("--instances", instances, "random gradient sets")->check(CLI::PositiveNumber);
  oracle->add_option("--seed", oracle_seed, "random seed")->check(CLI::NonNegativeNumber);
  oracle->add_option("--step", step, "simplex grid spacing");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  piml_context* ctx = piml_context_new();
  if (ctx == nullptr) return 1;
  int code = 0;
  char* result = nullptr;
  if (oracle->parsed()) {
    const piml_status s = piml_cmd_oracle(ctx, instances, static_cast<std::uint64_t>(oracle_seed),
                                          step, &result);
    code = report(ctx, s, result);
  } else {
    piml_experiment* exp = nullptr;
    piml_status s = PIML_OK;
    try {
      s = load(ctx, common, &exp);
    } catch (const CLI::ValidationError& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      piml_context_free(ctx);
      return 1;
    }
    if (s == PIML_OK) {
      if (cmds[0]->parsed()) s = piml_cmd_simulate(ctx, exp, &result);
      if (cmds[1]->parsed()) s = piml_cmd_calibrate(ctx, exp, &result);
      if (cmds[2]->parsed()) s = piml_cmd_train(ctx, exp, &result);
      if (cmds[3]->parsed()) s = piml_cmd_sweep(ctx, exp, &result);
      if (cmds[4]->parsed()) s = piml_cmd_compare(ctx, exp, &result);
      if (eval->parsed()) {
        s = piml_cmd_eval(ctx, exp, checkpoint.c_str(), data.empty() ? nullptr : data.c_str(),
                          &result);
      }
    }
    code = report(ctx, s, result);
    piml_experiment_free(exp);
  }
  piml_context_free(ctx);
  return code;
}
