#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "posefront/evalproto.hpp"
#include "posefront/harness.hpp"
#include "posefront/synthgen.hpp"

namespace posefront {

// Everything one CLI invocation needs. `synth.num_identities` counts training
// identities; `eval_identities` more are generated from the same manifold and
// held out for verification.
struct ExperimentConfig {
  SynthConfig synth;
  int eval_identities = 100;
  TrainConfig train;
  bool lambda_explicit = false;  // otherwise lambda follows the loss mode
  int folds = 10;
  int pairs_per_fold = 400;
  std::uint64_t protocol_seed = 7;
  std::vector<std::uint64_t> ablation_seeds{1, 2, 3, 4, 5};
  int topk = 20;
  int dump_pairs = 5;
  std::string out_dir = ".";

  // Throws ValidationError naming the offending key.
  void validate() const;
  // The training config with lambda resolved from the loss mode when not set.
  TrainConfig resolved_train() const;
  // Generator config covering training and held-out identities together.
  SynthConfig generation_config() const;
};

// Known keys, in the order write_config emits them.
const std::vector<std::string>& config_keys();

// Applies one `key = value` setting. Unknown keys and malformed values throw ValidationError.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value);

// Flat `key = value` lines; `#` starts a comment; blank lines are ignored.
void apply_config_text(ExperimentConfig& cfg, std::string_view text, std::string_view source = "config");
void apply_config_file(ExperimentConfig& cfg, const std::filesystem::path& path);

void write_config(std::ostream& out, const ExperimentConfig& cfg);

// Generates training and held-out identities together and splits them on label.
std::pair<Dataset, Dataset> generate_split(const ExperimentConfig& cfg);
// The verification protocol for `eval_data`, seeded by cfg.protocol_seed.
std::vector<Fold> protocol_for(const ExperimentConfig& cfg, const Dataset& eval_data);

}  // namespace posefront
