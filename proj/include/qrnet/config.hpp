#pragma once

// JSON run configuration with sections {problem, datagen, model, train,
// experiment}. Every field has a default; a user file and dotted overrides
// ("train.mu_u" -> 5) are merged on top with type checking.

#include <filesystem>
#include <string>

#include "json.hpp"
#include "qrnet/burgers.hpp"
#include "qrnet/datagen.hpp"
#include "qrnet/experiments.hpp"
#include "qrnet/train.hpp"

namespace qrnet {

using Json = nlohmann::ordered_json;

Json default_config();

/// Merges `user` into `base`; unknown keys or mismatched types throw ConfigError.
void merge_config(Json& base, const Json& user, const std::string& where = "");

/// Reads a JSON file and merges it over the defaults.
Json load_config(const std::filesystem::path& path);

/// `dotted` like "train.mu_u"; `value` is parsed as JSON when possible and as
/// a string otherwise.
void apply_override(Json& config, const std::string& dotted, const std::string& value);

struct ProblemSpec {
  std::string type;  // burgers | linear-burgers
  int n = 16;
  burgers::Params params;
};

ProblemSpec problem_spec(const Json& config);
burgers::BurgersProblem build_problem(const ProblemSpec& spec);
HorizonConfig horizon_config(const Json& config);
TrainConfig train_config(const Json& config);
std::vector<int> hidden_layers(const Json& config);
ModelMode model_mode(const Json& config);
SensitivityConfig sensitivity_config(const Json& config, std::uint64_t seed);
CostGapConfig cost_gap_config(const Json& config, std::uint64_t seed);

}  // namespace qrnet
