#include "smug/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "smug/rng.hpp"

namespace smug {

namespace {
std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}
}  // namespace

KeyValueConfig KeyValueConfig::parse_string(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::runtime_error("config line " + std::to_string(lineno) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      cfg.sections_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error("config line " + std::to_string(lineno) + ": empty key");
    cfg.sections_[section][key] = value;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_string(ss.str());
}

bool KeyValueConfig::has(const std::string& section, const std::string& key) const {
  const auto s = sections_.find(section);
  return s != sections_.end() && s->second.count(key) > 0;
}

std::string KeyValueConfig::get_str(const std::string& section, const std::string& key,
                                    const std::string& fallback) const {
  const auto s = sections_.find(section);
  if (s == sections_.end()) return fallback;
  const auto k = s->second.find(key);
  return k == s->second.end() ? fallback : k->second;
}

std::string KeyValueConfig::require_str(const std::string& section, const std::string& key) const {
  if (!has(section, key))
    throw std::runtime_error("config: missing required key [" + section + "] " + key);
  return get_str(section, key, "");
}

double KeyValueConfig::get_double(const std::string& section, const std::string& key,
                                  double fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get_str(section, key, "");
  std::size_t pos = 0;
  const double d = std::stod(v, &pos);
  if (pos != v.size()) throw std::runtime_error("config: bad number for [" + section + "] " + key);
  return d;
}

long KeyValueConfig::get_int(const std::string& section, const std::string& key,
                             long fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get_str(section, key, "");
  std::size_t pos = 0;
  const long d = std::stol(v, &pos);
  if (pos != v.size()) throw std::runtime_error("config: bad integer for [" + section + "] " + key);
  return d;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& section, const std::string& key,
                                      std::uint64_t fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get_str(section, key, "");
  std::size_t pos = 0;
  const unsigned long long d = std::stoull(v, &pos);
  if (pos != v.size()) throw std::runtime_error("config: bad integer for [" + section + "] " + key);
  return d;
}

bool KeyValueConfig::get_bool(const std::string& section, const std::string& key,
                              bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get_str(section, key, "");
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::runtime_error("config: bad boolean for [" + section + "] " + key);
}

void KeyValueConfig::set(const std::string& section, const std::string& key,
                         const std::string& value) {
  sections_[section][key] = value;
}

std::string KeyValueConfig::canonical() const {
  std::string out;
  for (const auto& [section, kvs] : sections_) {  // std::map: already sorted
    out += "[" + section + "]\n";
    for (const auto& [k, v] : kvs) out += k + " = " + v + "\n";
  }
  return out;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::string KeyValueConfig::hash() const { return fnv1a_hex(canonical()); }

ExperimentConfig ExperimentConfig::from(const KeyValueConfig& kv) {
  ExperimentConfig c;
  c.raw = kv;
  c.master_seed = kv.get_u64("experiment", "master_seed", 1234);

  c.phantom.size = static_cast<std::size_t>(kv.get_int("dataset", "size", 64));
  c.phantom.min_ellipses = static_cast<int>(kv.get_int("dataset", "min_ellipses", 4));
  c.phantom.max_ellipses = static_cast<int>(kv.get_int("dataset", "max_ellipses", 9));
  c.phantom.seed = derive_seed(c.master_seed, {rng_stream::phantom});
  c.n_train = static_cast<int>(kv.get_int("dataset", "n_train", 50));
  c.n_val = static_cast<int>(kv.get_int("dataset", "n_val", 10));
  c.n_test = static_cast<int>(kv.get_int("dataset", "n_test", 20));
  c.meas_noise_sigma = kv.get_double("dataset", "meas_noise_sigma", 0.0);

  c.accel = kv.get_double("mask", "accel", 4.0);
  c.center_frac = kv.get_double("mask", "center_frac", 0.08);

  c.denoiser_spec.hidden_channels = static_cast<int>(kv.get_int("denoiser", "channels", 16));
  c.denoiser_spec.n_layers = static_cast<int>(kv.get_int("denoiser", "layers", 3));
  c.denoiser_spec.kernel = static_cast<int>(kv.get_int("denoiser", "kernel", 3));
  c.denoiser_spec.output_bound = kv.get_double("denoiser", "output_bound", 1.5);

  c.encoder_spec.channels = static_cast<int>(kv.get_int("encoder", "channels", 8));
  c.encoder_spec.n_blocks = static_cast<int>(kv.get_int("encoder", "blocks", 5));
  c.encoder_spec.kernel = static_cast<int>(kv.get_int("encoder", "kernel", 3));

  c.ista_spec.phases = static_cast<int>(kv.get_int("istanet", "phases", 4));
  c.ista_spec.channels = static_cast<int>(kv.get_int("istanet", "channels", 16));
  c.ista_spec.kernel = static_cast<int>(kv.get_int("istanet", "kernel", 3));
  c.ista_spec.init_step = kv.get_double("istanet", "init_step", 0.5);
  c.ista_spec.init_threshold = kv.get_double("istanet", "init_threshold", 0.01);

  c.unroll.n_steps = static_cast<int>(kv.get_int("unroll", "n_steps", 8));
  c.unroll.lambda = kv.get_double("unroll", "lambda", 1.0);
  c.unroll.cg_tol = kv.get_double("unroll", "cg_tol", 1e-6);
  c.unroll.cg_max = static_cast<int>(kv.get_int("unroll", "cg_max", 64));

  c.smoothing.sigma = kv.get_double("smoothing", "sigma", 0.05);
  c.smoothing.samples = static_cast<int>(kv.get_int("smoothing", "samples", 4));
  c.smoothing.seed = derive_seed(c.master_seed, {rng_stream::smooth});

  c.train.epochs = static_cast<int>(kv.get_int("train", "epochs", 8));
  c.train.batch_size = static_cast<int>(kv.get_int("train", "batch_size", 2));
  c.train.lr = kv.get_double("train", "lr", 1e-4);
  c.train.beta1 = kv.get_double("train", "beta1", 0.5);
  c.train.beta2 = kv.get_double("train", "beta2", 0.999);
  c.train.lambda_ell = kv.get_double("train", "lambda_ell", 1.0);
  c.train.sigma = kv.get_double("train", "sigma", 0.05);
  c.train.train_T = static_cast<int>(kv.get_int("train", "train_T", 2));
  c.train.clip_norm = kv.get_double("train", "clip_norm", 10.0);
  c.train.ustab_variant =
      ustab_variant_from_name(kv.get_str("train", "ustab_variant", "denoised_target"));
  c.train.seed = derive_seed(c.master_seed, {rng_stream::shuffle});

  c.pretrain_cfg = c.train;
  c.pretrain_cfg.epochs = static_cast<int>(
      kv.get_int("train", "pretrain_epochs", c.train.epochs));
  c.pretrain_cfg.lr = kv.get_double("train", "pretrain_lr", c.train.lr);
  c.pretrain_cfg.sigma = kv.get_double("train", "pretrain_sigma", c.train.sigma);
  c.pretrain_cfg.train_T = static_cast<int>(
      kv.get_int("train", "pretrain_T", c.train.train_T));

  c.attack.epsilon_scale = kv.get_double("attack", "epsilon_scale", 0.02);
  c.attack.steps = static_cast<int>(kv.get_int("attack", "steps", 10));
  c.attack.step_size_multiple = kv.get_double("attack", "step_size_multiple", 2.5);
  c.attack.freeze_smoothing_noise = kv.get_bool("attack", "freeze_smoothing_noise", true);
  c.attack.seed = derive_seed(c.master_seed, {rng_stream::attack});

  c.eval_noise_sigma = kv.get_double("eval", "noise_sigma", 0.01);

  const std::string methods = kv.get_str("experiment", "methods", "modl,smug,wsmug");
  std::string token;
  std::istringstream ms(methods);
  while (std::getline(ms, token, ',')) {
    token = trim(token);
    if (!token.empty()) c.methods.push_back(token);
  }
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  return from(KeyValueConfig::parse_file(path));
}

SamplingMask ExperimentConfig::make_mask(std::size_t h, std::size_t w,
                                         double accel_override) const {
  const double a = accel_override > 0.0 ? accel_override : accel;
  return make_vd_mask(h, w, a, center_frac, derive_seed(master_seed, {rng_stream::mask}));
}

}  // namespace smug
