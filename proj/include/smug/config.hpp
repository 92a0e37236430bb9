#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "smug/models.hpp"
#include "smug/phantom.hpp"
#include "smug/recon.hpp"
#include "smug/robustness.hpp"
#include "smug/training.hpp"

namespace smug {

/// Plain-text key-value configuration with [section] headers, '#' comments
/// and key = value lines. Canonical serialization (sorted sections/keys) is
/// the hash source, so formatting and ordering do not change the hash.
class KeyValueConfig {
 public:
  static KeyValueConfig parse_string(const std::string& text);
  static KeyValueConfig parse_file(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  std::string get_str(const std::string& section, const std::string& key,
                      const std::string& fallback) const;
  std::string require_str(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  long get_int(const std::string& section, const std::string& key, long fallback) const;
  std::uint64_t get_u64(const std::string& section, const std::string& key,
                        std::uint64_t fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  void set(const std::string& section, const std::string& key, const std::string& value);

  std::string canonical() const;
  /// FNV-1a 64-bit hash of the canonical serialization, as 16 hex digits.
  std::string hash() const;

  const std::map<std::string, std::map<std::string, std::string>>& sections() const {
    return sections_;
  }

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

/// Typed view of a full experiment configuration; every run records the
/// producing KeyValueConfig hash in its artifacts.
struct ExperimentConfig {
  PhantomSpec phantom;
  int n_train = 50, n_val = 10, n_test = 20;
  double accel = 4.0;
  double center_frac = 0.08;
  double meas_noise_sigma = 0.0;

  DenoiserSpec denoiser_spec;
  EncoderSpec encoder_spec;
  IstaSpec ista_spec;

  UnrollConfig unroll;
  SmoothingConfig smoothing;  // evaluation-time smoothing
  TrainConfig train;          // fine-tuning stage
  TrainConfig pretrain_cfg;   // pre-training stage (same keys, *_pretrain overrides)
  AttackConfig attack;
  double eval_noise_sigma = 0.01;

  std::vector<std::string> methods;
  std::uint64_t master_seed = 1234;

  KeyValueConfig raw;

  static ExperimentConfig from(const KeyValueConfig& kv);
  static ExperimentConfig from_file(const std::string& path);

  SamplingMask make_mask(std::size_t h, std::size_t w, double accel_override = -1.0) const;
};

std::string fnv1a_hex(const std::string& text);

}  // namespace smug
