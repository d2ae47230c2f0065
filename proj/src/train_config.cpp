#include <nlohmann/json.hpp>
#include <stdexcept>

#include "dense/training.hpp"

namespace dense {

void apply_train_config_json(TrainConfig& cfg, const std::string& json_text) {
  const auto j = nlohmann::json::parse(json_text);
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "n_epochs" || key == "epochs") cfg.n_epochs = v.get<std::size_t>();
    else if (key == "alpha1") cfg.alpha1 = v.get<double>();
    else if (key == "m1") cfg.m1 = v.get<std::size_t>();
    else if (key == "gamma1") cfg.gamma1 = v.get<double>();
    else if (key == "s1") cfg.s1 = v.get<std::size_t>();
    else if (key == "alpha2") cfg.alpha2 = v.get<double>();
    else if (key == "m2") cfg.m2 = v.get<std::size_t>();
    else if (key == "gamma2") cfg.gamma2 = v.get<double>();
    else if (key == "s2") cfg.s2 = v.get<std::size_t>();
    else if (key == "p_val") cfg.p_val = v.get<std::size_t>();
    else if (key == "n_rank") cfg.n_rank = v.get<std::size_t>();
    else if (key == "huber_delta") cfg.huber_delta = v.get<double>();
    else if (key == "clip_norm") cfg.clip_norm = v.get<double>();
    else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
    else if (key == "optimizer") {
      const auto name = v.get<std::string>();
      if (name == "sgd") cfg.optimizer = OptimizerKind::kSgd;
      else if (name == "adam") cfg.optimizer = OptimizerKind::kAdam;
      else throw std::invalid_argument("unknown optimizer '" + name + "' (sgd, adam)");
    } else {
      throw std::invalid_argument("unknown train config key '" + key + "'");
    }
  }
}

}  // namespace dense
