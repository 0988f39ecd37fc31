#include "posefront/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include "posefront/errors.hpp"
#include "posefront/evalproto.hpp"
#include "posefront/fileio.hpp"
#include "posefront/format.hpp"

namespace posefront {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ValidationError("invalid value '" + std::string(value) + "' for " + std::string(key) + ": expected " +
                        std::string(expected));
}

template <typename T>
T parse_number(std::string_view key, std::string_view text, std::string_view expected) {
  text = trim(text);
  T out{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) bad_value(key, text, expected);
  return out;
}

int parse_int(std::string_view key, std::string_view v) { return parse_number<int>(key, v, "an integer"); }
double parse_real(std::string_view key, std::string_view v) { return parse_number<double>(key, v, "a number"); }
std::uint64_t parse_u64(std::string_view key, std::string_view v) {
  return parse_number<std::uint64_t>(key, v, "an unsigned integer");
}

bool parse_bool(std::string_view key, std::string_view v) {
  v = trim(v);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "true or false");
}

template <typename T, typename F>
std::vector<T> parse_list(std::string_view v, F parse_one) {
  std::vector<T> out;
  v = trim(v);
  if (v.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = v.find(',', start);
    out.push_back(parse_one(v.substr(start, comma == std::string_view::npos ? v.size() - start : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T, typename F>
std::string join(const T& items, F render) {
  std::string out;
  for (const auto& item : items) {
    if (!out.empty()) out += ',';
    out += render(item);
  }
  return out;
}

std::string real(double v) { return format_double(v); }

struct KeyHandler {
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<std::pair<std::string, KeyHandler>>& handlers() {
  static const std::vector<std::pair<std::string, KeyHandler>> table = [] {
    std::vector<std::pair<std::string, KeyHandler>> t;
    auto add = [&t](std::string key, auto set, auto get) { t.emplace_back(std::move(key), KeyHandler{set, get}); };
    using C = ExperimentConfig;
    using S = std::string_view;

    add("num_identities", [](C& c, S v) { c.synth.num_identities = parse_int("num_identities", v); },
        [](const C& c) { return std::to_string(c.synth.num_identities); });
    add("eval_identities", [](C& c, S v) { c.eval_identities = parse_int("eval_identities", v); },
        [](const C& c) { return std::to_string(c.eval_identities); });
    add("samples_per_identity", [](C& c, S v) { c.synth.samples_per_identity = parse_int("samples_per_identity", v); },
        [](const C& c) { return std::to_string(c.synth.samples_per_identity); });
    add("dim_in", [](C& c, S v) { c.synth.dim_in = parse_int("dim_in", v); },
        [](const C& c) { return std::to_string(c.synth.dim_in); });
    add(
        "pose_distribution",
        [](C& c, S v) {
          const auto w = parse_list<double>(v, [](S x) { return parse_real("pose_distribution", x); });
          if (w.size() != kPoseBinCount) bad_value("pose_distribution", v, "four comma-separated weights");
          std::copy(w.begin(), w.end(), c.synth.pose_distribution.begin());
        },
        [](const C& c) { return join(c.synth.pose_distribution, real); });
    add("occlusion_fraction", [](C& c, S v) { c.synth.occlusion_fraction = parse_real("occlusion_fraction", v); },
        [](const C& c) { return real(c.synth.occlusion_fraction); });
    add("deformation_strength",
        [](C& c, S v) { c.synth.deformation_strength = parse_real("deformation_strength", v); },
        [](const C& c) { return real(c.synth.deformation_strength); });
    add("noise_sigma", [](C& c, S v) { c.synth.noise_sigma = parse_real("noise_sigma", v); },
        [](const C& c) { return real(c.synth.noise_sigma); });
    add("data_seed", [](C& c, S v) { c.synth.seed = parse_u64("data_seed", v); },
        [](const C& c) { return std::to_string(c.synth.seed); });

    add("batch_size", [](C& c, S v) { c.train.batch_size = parse_int("batch_size", v); },
        [](const C& c) { return std::to_string(c.train.batch_size); });
    add("epochs", [](C& c, S v) { c.train.epochs = parse_int("epochs", v); },
        [](const C& c) { return std::to_string(c.train.epochs); });
    add("lr_init", [](C& c, S v) { c.train.lr_init = parse_real("lr_init", v); },
        [](const C& c) { return real(c.train.lr_init); });
    add(
        "milestones",
        [](C& c, S v) { c.train.milestones = parse_list<int>(v, [](S x) { return parse_int("milestones", x); }); },
        [](const C& c) { return join(c.train.milestones, [](int m) { return std::to_string(m); }); });
    add(
        "decay_factors",
        [](C& c, S v) {
          c.train.decay_factors = parse_list<double>(v, [](S x) { return parse_real("decay_factors", x); });
        },
        [](const C& c) { return join(c.train.decay_factors, real); });
    add("momentum", [](C& c, S v) { c.train.momentum = parse_real("momentum", v); },
        [](const C& c) { return real(c.train.momentum); });
    add("weight_decay", [](C& c, S v) { c.train.weight_decay = parse_real("weight_decay", v); },
        [](const C& c) { return real(c.train.weight_decay); });
    add(
        "lambda",
        [](C& c, S v) {
          c.train.lambda = parse_real("lambda", v);
          c.lambda_explicit = true;
        },
        [](const C& c) { return real(c.resolved_train().lambda); });
    add("grad_clip", [](C& c, S v) { c.train.grad_clip = parse_real("grad_clip", v); },
        [](const C& c) { return real(c.train.grad_clip); });
    add(
        "loss_mode",
        [](C& c, S v) {
          try {
            c.train.loss_mode = parse_loss_mode(std::string(trim(v)));
          } catch (const ValidationError&) {
            bad_value("loss_mode", v, "none, mse or apl");
          }
        },
        [](const C& c) { return to_string(c.train.loss_mode); });
    add("use_progressive", [](C& c, S v) { c.train.use_progressive = parse_bool("use_progressive", v); },
        [](const C& c) { return std::string(c.train.use_progressive ? "true" : "false"); });
    add("block_count", [](C& c, S v) { c.train.block_count = parse_int("block_count", v); },
        [](const C& c) { return std::to_string(c.train.block_count); });
    add(
        "gate_thresholds",
        [](C& c, S v) {
          c.train.gate_thresholds = parse_list<double>(v, [](S x) { return parse_real("gate_thresholds", x); });
        },
        [](const C& c) { return join(c.train.gate_config().thresholds, real); });
    add("gate_steepness", [](C& c, S v) { c.train.gate_steepness = parse_real("gate_steepness", v); },
        [](const C& c) { return real(c.train.gate_steepness); });
    add("fixed_gate", [](C& c, S v) { c.train.fixed_gate = parse_bool("fixed_gate", v); },
        [](const C& c) { return std::string(c.train.fixed_gate ? "true" : "false"); });
    add("hidden_dim", [](C& c, S v) { c.train.hidden_dim = parse_int("hidden_dim", v); },
        [](const C& c) { return std::to_string(c.train.hidden_dim); });
    add("embedding_dim", [](C& c, S v) { c.train.embedding_dim = parse_int("embedding_dim", v); },
        [](const C& c) { return std::to_string(c.train.embedding_dim); });
    add("train_seed", [](C& c, S v) { c.train.seed = parse_u64("train_seed", v); },
        [](const C& c) { return std::to_string(c.train.seed); });

    add("folds", [](C& c, S v) { c.folds = parse_int("folds", v); },
        [](const C& c) { return std::to_string(c.folds); });
    add("pairs_per_fold", [](C& c, S v) { c.pairs_per_fold = parse_int("pairs_per_fold", v); },
        [](const C& c) { return std::to_string(c.pairs_per_fold); });
    add("protocol_seed", [](C& c, S v) { c.protocol_seed = parse_u64("protocol_seed", v); },
        [](const C& c) { return std::to_string(c.protocol_seed); });
    add(
        "ablation_seeds",
        [](C& c, S v) {
          c.ablation_seeds = parse_list<std::uint64_t>(v, [](S x) { return parse_u64("ablation_seeds", x); });
        },
        [](const C& c) {
          return join(c.ablation_seeds, [](std::uint64_t s) { return std::to_string(s); });
        });
    add("topk", [](C& c, S v) { c.topk = parse_int("topk", v); }, [](const C& c) { return std::to_string(c.topk); });
    add("dump_pairs", [](C& c, S v) { c.dump_pairs = parse_int("dump_pairs", v); },
        [](const C& c) { return std::to_string(c.dump_pairs); });
    add("out_dir", [](C& c, S v) { c.out_dir = std::string(trim(v)); }, [](const C& c) { return c.out_dir; });
    return t;
  }();
  return table;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (eval_identities < 2) throw ValidationError("eval_identities must be at least 2");
  generation_config().validate();
  if (synth.num_identities < 2) throw ValidationError("num_identities must be at least 2");
  resolved_train().validate();
  if (folds < 2) throw ValidationError("folds must be at least 2");
  if (pairs_per_fold < 4 || pairs_per_fold % 4 != 0)
    throw ValidationError("pairs_per_fold must be a positive multiple of 4");
  if (ablation_seeds.empty()) throw ValidationError("ablation_seeds must name at least one seed");
  if (topk < 1 || topk > train.embedding_dim) throw ValidationError("topk must lie in [1, embedding_dim]");
  if (dump_pairs < 1) throw ValidationError("dump_pairs must be positive");
  if (out_dir.empty()) throw ValidationError("out_dir must not be empty");
}

TrainConfig ExperimentConfig::resolved_train() const {
  TrainConfig t = train;
  if (!lambda_explicit) t.lambda = default_lambda(t.loss_mode);
  return t;
}

SynthConfig ExperimentConfig::generation_config() const {
  SynthConfig s = synth;
  s.num_identities = synth.num_identities + eval_identities;
  return s;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, h] : handlers()) k.push_back(name);
    return k;
  }();
  return keys;
}

void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  key = trim(key);
  for (const auto& [name, h] : handlers()) {
    if (name == key) {
      h.set(cfg, value);
      return;
    }
  }
  throw ValidationError("unknown config key '" + std::string(key) + "'");
}

void apply_config_text(ExperimentConfig& cfg, std::string_view text, std::string_view source) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    std::string_view line = text.substr(start, nl == std::string_view::npos ? text.size() - start : nl - start);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (!line.empty()) {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos)
        throw ValidationError(std::string(source) + ":" + std::to_string(line_no) + ": expected key = value");
      try {
        apply_setting(cfg, line.substr(0, eq), line.substr(eq + 1));
      } catch (const ValidationError& e) {
        throw ValidationError(std::string(source) + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
}

void apply_config_file(ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ValidationError(e.what());
  }
  apply_config_text(cfg, text, path.string());
}

void write_config(std::ostream& out, const ExperimentConfig& cfg) {
  for (const auto& [name, h] : handlers()) out << name << " = " << h.get(cfg) << '\n';
}

std::pair<Dataset, Dataset> generate_split(const ExperimentConfig& cfg) {
  return split_by_identity(generate_dataset(cfg.generation_config()), cfg.synth.num_identities);
}

std::vector<Fold> protocol_for(const ExperimentConfig& cfg, const Dataset& eval_data) {
  Rng rng(cfg.protocol_seed);
  return build_protocol(eval_data, cfg.folds, cfg.pairs_per_fold, rng);
}

}  // namespace posefront
