#include "smug/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace smug {

namespace {
constexpr char kMagic[8] = {'S', 'M', 'U', 'G', 'C', 'K', 'P', 'T'};

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}
}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  nlohmann::json header;
  header["format_version"] = ck.format_version;
  header["kind"] = ck.kind;
  header["meta"] = ck.meta;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, t] : ck.tensors) {
    nlohmann::json entry;
    entry["name"] = name;
    entry["shape"] = t.shape();
    entry["dtype"] = "float64";
    tensors.push_back(entry);
  }
  header["tensors"] = tensors;
  const std::string htext = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
  os.write(kMagic, 8);
  write_u64(os, htext.size());
  os.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const auto& [name, t] : ck.tensors)
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  const std::uint64_t hlen = read_u64(is);
  std::string htext(hlen, '\0');
  is.read(htext.data(), static_cast<std::streamsize>(hlen));
  nlohmann::json header = nlohmann::json::parse(htext);

  Checkpoint ck;
  ck.format_version = header.at("format_version").get<int>();
  ck.kind = header.at("kind").get<std::string>();
  ck.meta = header.value("meta", nlohmann::json::object());
  for (const auto& entry : header.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!is) throw std::runtime_error("load_checkpoint: truncated payload in " + path);
    ck.tensors.emplace_back(name, std::move(t));
  }
  return ck;
}

const Tensor& checkpoint_tensor(const Checkpoint& ck, const std::string& name) {
  for (const auto& [n, t] : ck.tensors)
    if (n == name) return t;
  throw std::runtime_error("checkpoint: missing tensor " + name);
}

bool checkpoint_has(const Checkpoint& ck, const std::string& name) {
  for (const auto& [n, t] : ck.tensors)
    if (n == name) return true;
  return false;
}

void pack_model(Checkpoint& ck, const DenoiserNet& net) {
  for (const auto& [name, t] : named_params(net)) ck.tensors.emplace_back(name, *t);
  ck.meta["denoiser"] = {{"n_layers", net.layers.size()}, {"output_bound", net.output_bound}};
}

void pack_model(Checkpoint& ck, const WeightEncoder& enc) {
  for (const auto& [name, t] : named_params(enc)) ck.tensors.emplace_back(name, *t);
  ck.meta["encoder"] = {{"n_blocks", enc.blocks.size()}};
}

void pack_model(Checkpoint& ck, const IstaNetParams& p) {
  for (const auto& [name, t] : named_params(p)) ck.tensors.emplace_back(name, *t);
  ck.meta["istanet"] = {{"phases", p.phases.size()}};
}

DenoiserNet unpack_denoiser(const Checkpoint& ck) {
  DenoiserNet net;
  const auto n_layers = ck.meta.at("denoiser").at("n_layers").get<std::size_t>();
  net.output_bound = ck.meta.at("denoiser").at("output_bound").get<double>();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::string base = "denoiser.layer" + std::to_string(l);
    Conv2dParams layer;
    layer.kernel = checkpoint_tensor(ck, base + ".kernel");
    layer.bias = checkpoint_tensor(ck, base + ".bias");
    net.layers.push_back(std::move(layer));
  }
  return net;
}

WeightEncoder unpack_encoder(const Checkpoint& ck) {
  WeightEncoder enc;
  const auto n_blocks = ck.meta.at("encoder").at("n_blocks").get<std::size_t>();
  for (std::size_t b = 0; b < n_blocks; ++b) {
    const std::string base = "encoder.block" + std::to_string(b);
    WeightEncoder::Block blk;
    blk.kernel = checkpoint_tensor(ck, base + ".kernel");
    blk.bias = checkpoint_tensor(ck, base + ".bias");
    blk.gamma = checkpoint_tensor(ck, base + ".gamma");
    blk.beta = checkpoint_tensor(ck, base + ".beta");
    enc.blocks.push_back(std::move(blk));
  }
  enc.head_w = checkpoint_tensor(ck, "encoder.head.w");
  enc.head_b = checkpoint_tensor(ck, "encoder.head.b");
  return enc;
}

IstaNetParams unpack_istanet(const Checkpoint& ck) {
  IstaNetParams p;
  const auto phases = ck.meta.at("istanet").at("phases").get<std::size_t>();
  for (std::size_t n = 0; n < phases; ++n) {
    const std::string base = "istanet.phase" + std::to_string(n);
    IstaPhase ph;
    ph.step_size = checkpoint_tensor(ck, base + ".step_size");
    ph.threshold = checkpoint_tensor(ck, base + ".threshold");
    ph.f1 = checkpoint_tensor(ck, base + ".f1");
    ph.f2 = checkpoint_tensor(ck, base + ".f2");
    ph.g1 = checkpoint_tensor(ck, base + ".g1");
    ph.g2 = checkpoint_tensor(ck, base + ".g2");
    p.phases.push_back(std::move(ph));
  }
  return p;
}

}  // namespace smug
