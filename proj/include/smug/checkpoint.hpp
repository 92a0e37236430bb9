#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "smug/models.hpp"

namespace smug {

/// Versioned binary container: magic + JSON header (names, shapes, meta) +
/// raw little-endian float64 payload. Round-trips bit-identically.
struct Checkpoint {
  int format_version = 1;
  std::string kind;  // "denoiser", "denoiser+encoder", "istanet", "dataset", ...
  std::vector<std::pair<std::string, Tensor>> tensors;
  nlohmann::json meta;  // training config snapshot, rng seeds, mask spec
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

const Tensor& checkpoint_tensor(const Checkpoint& ck, const std::string& name);
bool checkpoint_has(const Checkpoint& ck, const std::string& name);

// -- model <-> checkpoint assembly ---------------------------------------------

void pack_model(Checkpoint& ck, const DenoiserNet& net);
void pack_model(Checkpoint& ck, const WeightEncoder& enc);
void pack_model(Checkpoint& ck, const IstaNetParams& p);

DenoiserNet unpack_denoiser(const Checkpoint& ck);
WeightEncoder unpack_encoder(const Checkpoint& ck);
IstaNetParams unpack_istanet(const Checkpoint& ck);

}  // namespace smug
