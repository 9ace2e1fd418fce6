#include "metaroute/project_config.hpp"

#include <cstdlib>
#include <fstream>

#include <json.hpp>

namespace metaroute {

using nlohmann::json;

void ProjectConfig::rebase(const std::filesystem::path& root) {
  auto fix = [&](std::filesystem::path& p) {
    if (p.is_relative()) p = root / p;
  };
  fix(paths.registry);
  fix(paths.demos_dir);
  fix(paths.model_checkpoint);
  fix(paths.head_checkpoint);
  fix(paths.vocab);
  fix(paths.reports_dir);
}

ProjectConfig ProjectConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }

  ProjectConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);

  if (j.contains("model")) {
    const auto& m = j.at("model");
    cfg.model.hidden_dim = m.value("hidden_dim", cfg.model.hidden_dim);
    cfg.model.n_layers = m.value("n_layers", cfg.model.n_layers);
    cfg.model.n_heads = m.value("n_heads", cfg.model.n_heads);
    cfg.model.max_context = m.value("max_context", cfg.model.max_context);
    cfg.model.seed = m.value("seed", cfg.seed);
  } else {
    cfg.model.seed = cfg.seed;
  }

  if (j.contains("train")) {
    const auto& t = j.at("train");
    cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
    cfg.train.weight_decay = t.value("weight_decay", cfg.train.weight_decay);
    cfg.train.epochs = t.value("epochs", cfg.train.epochs);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.freeze_existing = t.value("freeze_existing", cfg.train.freeze_existing);
    cfg.train.seed = t.value("seed", cfg.seed);
  } else {
    cfg.train.seed = cfg.seed;
  }

  if (j.contains("filter")) {
    const auto& f = j.at("filter");
    cfg.filter.tau1 = f.value("tau1", cfg.filter.tau1);
    cfg.filter.tau2 = f.value("tau2", cfg.filter.tau2);
    cfg.filter.target_size = f.value("target_size", cfg.filter.target_size);
    cfg.filter.max_rounds = f.value("max_rounds", cfg.filter.max_rounds);
    const std::string agg = f.value("aggregation", "min");
    if (agg == "min") {
      cfg.filter.aggregation = FilterConfig::Aggregation::Min;
    } else if (agg == "mean") {
      cfg.filter.aggregation = FilterConfig::Aggregation::Mean;
    } else {
      throw ConfigError("config: filter.aggregation must be 'min' or 'mean'");
    }
  }

  if (j.contains("manager")) {
    const auto& m = j.at("manager");
    cfg.manager.k = m.value("k", cfg.manager.k);
    cfg.manager.max_steps = m.value("max_steps", cfg.manager.max_steps);
    const std::string mode = m.value("mode_override", "auto");
    if (mode == "auto") {
      cfg.manager.mode_override = ManagerConfig::Override::Auto;
    } else if (mode == "router") {
      cfg.manager.mode_override = ManagerConfig::Override::Router;
    } else if (mode == "manager") {
      cfg.manager.mode_override = ManagerConfig::Override::Manager;
    } else {
      throw ConfigError("config: manager.mode_override must be auto, router or manager");
    }
  }

  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    auto get = [&](const char* key, std::filesystem::path fallback) {
      return p.contains(key) ? std::filesystem::path(p.at(key).get<std::string>())
                             : std::move(fallback);
    };
    cfg.paths.registry = get("registry", cfg.paths.registry);
    cfg.paths.demos_dir = get("demos_dir", cfg.paths.demos_dir);
    cfg.paths.model_checkpoint = get("model_checkpoint", cfg.paths.model_checkpoint);
    cfg.paths.head_checkpoint = get("head_checkpoint", cfg.paths.head_checkpoint);
    cfg.paths.vocab = get("vocab", cfg.paths.vocab);
    cfg.paths.reports_dir = get("reports_dir", cfg.paths.reports_dir);
  }

  if (j.contains("generator")) {
    const auto& g = j.at("generator");
    cfg.generator.endpoint = g.value("endpoint", cfg.generator.endpoint);
    cfg.generator.timeout_ms = g.value("timeout_ms", cfg.generator.timeout_ms);
  }
  if (const char* env = std::getenv("METAROUTE_GENERATOR_ENDPOINT")) {
    cfg.generator.endpoint = env;
  }
  return cfg;
}

}  // namespace metaroute
