#include "txsp/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace txsp {
namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string unquote(std::string s) {
  s = trim(std::move(s));
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front())
    return s.substr(1, s.size() - 2);
  return s;
}

template <typename I>
I parse_integer(const std::string& key, const std::string& v) {
  I out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError(key, "expected an integer, got '" + v + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  // Accepts plain reals and simple ratios such as "1/4".
  const auto slash = v.find('/');
  if (slash != std::string::npos) {
    const double num = parse_real(key, trim(v.substr(0, slash)));
    const double den = parse_real(key, trim(v.substr(slash + 1)));
    if (den == 0) throw ConfigError(key, "zero denominator in '" + v + "'");
    return num / den;
  }
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError(key, "expected a number, got '" + v + "'");
  }
  if (used != v.size()) throw ConfigError(key, "expected a number, got '" + v + "'");
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename I, typename Member>
Field int_field(Member member) {
  return {[member](TrainConfig& c, const std::string& k, const std::string& v) {
            member(c) = parse_integer<I>(k, v);
          },
          [member](const TrainConfig& c) { return std::to_string(member(const_cast<TrainConfig&>(c))); }};
}

template <typename Member>
Field real_field(Member member) {
  return {[member](TrainConfig& c, const std::string& k, const std::string& v) {
            member(c) = parse_real(k, v);
          },
          [member](const TrainConfig& c) { return fmt(member(const_cast<TrainConfig&>(c))); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  using C = TrainConfig;
  static const std::vector<std::pair<std::string, Field>> table = {
      {"train.h", int_field<int>([](C& c) -> int& { return c.h; })},
      {"train.w", int_field<int>([](C& c) -> int& { return c.w; })},
      {"train.batch_size", int_field<int>([](C& c) -> int& { return c.batch_size; })},
      {"train.lr0", real_field([](C& c) -> double& { return c.lr0; })},
      {"train.lr_decay_every", int_field<int>([](C& c) -> int& { return c.lr_decay_every; })},
      {"train.lr_decay_factor", real_field([](C& c) -> double& { return c.lr_decay_factor; })},
      {"train.epochs", int_field<int>([](C& c) -> int& { return c.epochs; })},
      {"train.max_steps", int_field<long long>([](C& c) -> long long& { return c.max_steps; })},
      {"train.seed", int_field<std::uint64_t>([](C& c) -> std::uint64_t& { return c.seed; })},
      {"train.optimizer",
       {[](C& c, const std::string&, const std::string& v) { c.optimizer = optimizer_from_string(v); },
        [](const C& c) { return to_string(c.optimizer); }}},
      {"train.adam_beta1", real_field([](C& c) -> double& { return c.adam.beta1; })},
      {"train.adam_beta2", real_field([](C& c) -> double& { return c.adam.beta2; })},
      {"train.adam_eps", real_field([](C& c) -> double& { return c.adam.eps; })},
      {"train.gan_crops", int_field<int>([](C& c) -> int& { return c.gan_crops; })},
      {"train.extractor_seed",
       int_field<std::uint64_t>([](C& c) -> std::uint64_t& { return c.extractor_seed; })},
      {"train.checkpoint_every", int_field<int>([](C& c) -> int& { return c.checkpoint_every; })},
      {"loss.perceptual", real_field([](C& c) -> double& { return c.weights.perceptual; })},
      {"loss.style", real_field([](C& c) -> double& { return c.weights.style; })},
      {"loss.gan", real_field([](C& c) -> double& { return c.weights.gan; })},
      {"generator.base_width", int_field<int>([](C& c) -> int& { return c.generator.base_width; })},
      {"generator.width_multiplier",
       real_field([](C& c) -> double& { return c.generator.width_multiplier; })},
      {"generator.input_dims_divisor",
       int_field<int>([](C& c) -> int& { return c.generator.input_dims_divisor; })},
      {"generator.bn_momentum", real_field([](C& c) -> double& { return c.generator.bn_momentum; })},
      {"generator.bn_eps", real_field([](C& c) -> double& { return c.generator.bn_eps; })},
      {"discriminator.ndf", int_field<int>([](C& c) -> int& { return c.discriminator.ndf; })},
      {"discriminator.layers", int_field<int>([](C& c) -> int& { return c.discriminator.layers; })},
      {"discriminator.num_scales",
       int_field<int>([](C& c) -> int& { return c.discriminator.num_scales; })},
      {"discriminator.slope", real_field([](C& c) -> double& { return c.discriminator.slope; })},
  };
  return table;
}

const Field& field(const std::string& key) {
  for (const auto& [k, f] : fields())
    if (k == key) return f;
  throw ConfigError(key, "unknown configuration key");
}

}  // namespace

void TrainConfig::validate() const {
  auto check = [](bool ok, const char* key, const std::string& what) {
    if (!ok) throw ConfigError(key, what);
  };
  const int d = generator.input_dims_divisor;
  check(d >= 32 && d % 32 == 0, "generator.input_dims_divisor",
        "must be a positive multiple of 32 so that 1/16-scale features have even extents");
  check(h > 0 && h % d == 0, "train.h", "must be a positive multiple of " + std::to_string(d));
  check(w > 0 && w % d == 0, "train.w", "must be a positive multiple of " + std::to_string(d));
  check(batch_size >= 1, "train.batch_size", "must be at least 1");
  check(lr0 > 0, "train.lr0", "must be positive");
  check(lr_decay_every >= 1, "train.lr_decay_every", "must be at least 1");
  check(lr_decay_factor > 0, "train.lr_decay_factor", "must be positive");
  check(epochs >= 0, "train.epochs", "must be non-negative");
  check(max_steps >= 0, "train.max_steps", "must be non-negative");
  check(adam.beta1 >= 0 && adam.beta1 < 1, "train.adam_beta1", "must lie in [0, 1)");
  check(adam.beta2 >= 0 && adam.beta2 < 1, "train.adam_beta2", "must lie in [0, 1)");
  check(adam.eps > 0, "train.adam_eps", "must be positive");
  check(gan_crops >= 1, "train.gan_crops", "must be at least 1");
  check(checkpoint_every >= 0, "train.checkpoint_every", "must be non-negative");
  check(weights.perceptual >= 0, "loss.perceptual", "must be non-negative");
  check(weights.style >= 0, "loss.style", "must be non-negative");
  check(weights.gan >= 0, "loss.gan", "must be non-negative");
  check(generator.base_width >= 1, "generator.base_width", "must be at least 1");
  check(generator.width_multiplier > 0, "generator.width_multiplier", "must be positive");
  check(generator.bn_momentum >= 0 && generator.bn_momentum <= 1, "generator.bn_momentum",
        "must lie in [0, 1]");
  check(generator.bn_eps > 0, "generator.bn_eps", "must be positive");
  check(discriminator.ndf >= 1, "discriminator.ndf", "must be at least 1");
  check(discriminator.layers >= 1, "discriminator.layers", "must be at least 1");
  check(discriminator.num_scales >= 1, "discriminator.num_scales", "must be at least 1");
  check(discriminator.in_channels == 6, "discriminator.in_channels", "must be 6");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, f] : fields()) k.push_back(name);
    return k;
  }();
  return keys;
}

void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value) {
  field(key).set(cfg, key, unquote(value));
}

std::string get_setting(const TrainConfig& cfg, const std::string& key) {
  return field(key).get(cfg);
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("", "cannot parse '" + path.string() + "': " + e.message() + " (line " +
                              std::to_string(e.line()) + ")");
  }
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      apply_setting(base, name, node.data());
      continue;
    }
    for (const auto& [sub, leaf] : node) {
      if (!leaf.empty()) throw ConfigError(name + "." + sub, "nested sections are not supported");
      apply_setting(base, name + "." + sub, leaf.data());
    }
  }
  base.validate();
  return base;
}

TrainConfig apply_overrides(TrainConfig cfg, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError(trim(o), "override must look like key=value");
    apply_setting(cfg, trim(o.substr(0, eq)), o.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

json to_json(const TrainConfig& cfg) {
  json j = json::object();
  for (const auto& [key, f] : fields()) j[key] = f.get(cfg);
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  for (const auto& [key, value] : j.items())
    apply_setting(cfg, key, value.is_string() ? value.get<std::string>() : value.dump());
  cfg.validate();
  return cfg;
}

}  // namespace txsp

namespace txsp {

void save_generator(const std::filesystem::path& path, const ParamSet<float>& weights,
                    const GeneratorConfig& cfg) {
  TrainConfig tc;
  tc.generator = cfg;
  json gen = json::object();
  for (const auto& key : config_keys())
    if (key.rfind("generator.", 0) == 0) gen[key] = get_setting(tc, key);
  const json extra = {{"model", "generator"},
                      {"bilinear", "half_pixel"},
                      {"bn_eps", cfg.bn_eps},
                      {"bn_momentum", cfg.bn_momentum},
                      {"config", gen}};
  save_archive(path, weights, extra);
}

std::pair<ParamSet<float>, GeneratorConfig> load_generator(const std::filesystem::path& path) {
  json header;
  ParamSet<float> weights = load_archive<float>(path, &header);
  TrainConfig tc;
  if (header.contains("config") && header["config"].is_object()) {
    for (const auto& [key, value] : header["config"].items()) {
      if (key.rfind("generator.", 0) != 0) continue;
      apply_setting(tc, key, value.is_string() ? value.get<std::string>() : value.dump());
    }
  }
  validate_layout(weights, generator_layout(tc.generator));
  return {std::move(weights), tc.generator};
}

}  // namespace txsp
