#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "oracles.hpp"
#include "smug/config.hpp"
#include "smug/csvio.hpp"
#include "smug/eval.hpp"
#include "smug/manifest.hpp"
#include "smug/metrics.hpp"
#include "smug/phantom.hpp"
#include "smug/rng.hpp"

using namespace smug;

TEST_SUITE_BEGIN("harness");

TEST_CASE("phantoms: deterministic per seed, bounded, distinct across seeds") {
  PhantomSpec spec;
  spec.size = 32;
  spec.seed = 7;
  auto a = generate_phantoms(spec, 3);
  auto b = generate_phantoms(spec, 3);
  REQUIRE(a.size() == 3);
  CHECK(image_dist(a[0], b[0]) == 0.0);
  for (const auto& img : a) {
    CHECK(max_abs(img.re) <= 1.0);
    CHECK(max_abs(img.im) == 0.0);
  }
  CHECK(image_dist(a[0], a[1]) > 0.0);
  PhantomSpec other = spec;
  other.seed = 8;
  auto c = generate_phantoms(other, 1);
  CHECK(image_dist(a[0], c[0]) > 0.0);
}

TEST_CASE("simulate_measurements: noiseless equals A t; unitarity at full sampling") {
  PhantomSpec spec;
  spec.size = 16;
  spec.seed = 3;
  ComplexImage t = generate_phantoms(spec, 1)[0];
  ForwardOperator full{make_vd_mask(16, 16, 1.0, 0.5, 1)};
  KSpaceData y = simulate_measurements(t, full, 0.0, 0);
  KSpaceData want = apply_forward(full, t);
  CHECK(kspace_norm(y) == kspace_norm(want));
  CHECK(image_dist(idft2_unitary(y), t) < 1e-10);

  KSpaceData n1 = simulate_measurements(t, full, 0.01, 5);
  KSpaceData n2 = simulate_measurements(t, full, 0.01, 5);
  double diff = 0.0;
  for (std::size_t i = 0; i < n1.re.size(); ++i) diff += std::fabs(n1.re[i] - n2.re[i]);
  CHECK(diff == 0.0);
}

TEST_CASE("psnr: identical images hit the infinity sentinel and the 99 dB cap") {
  PhantomSpec spec;
  spec.size = 16;
  spec.seed = 4;
  ComplexImage t = generate_phantoms(spec, 1)[0];
  CHECK(std::isinf(psnr(t, t)));
  CHECK(psnr_capped(t, t) == 99.0);
}

TEST_CASE("psnr: peak 1 and MSE 0.01 give exactly 20 dB") {
  ComplexImage t(8, 8);
  t.re.at(0, 0) = 1.0;  // peak magnitude 1
  ComplexImage x = t;
  for (std::size_t i = 0; i < x.re.size(); ++i) x.re[i] += 0.1;  // |x|-|t| = 0.1 everywhere
  CHECK(psnr(x, t) == doctest::Approx(20.0).epsilon(1e-10));
}

TEST_CASE("psnr decreases as independent noise grows") {
  PhantomSpec spec;
  spec.size = 16;
  spec.seed = 5;
  ComplexImage t = generate_phantoms(spec, 1)[0];
  Rng rng(9);
  ComplexImage x1 = t, x2 = t;
  for (std::size_t i = 0; i < t.re.size(); ++i) {
    const double n = rng.normal(1.0);
    x1.re[i] += 0.01 * n;
    x2.re[i] += 0.05 * n;
  }
  CHECK(psnr(x1, t) > psnr(x2, t));
}

TEST_CASE("ssim: self-similarity is 1; structural mismatch is below 1") {
  PhantomSpec spec;
  spec.size = 16;
  spec.seed = 6;
  ComplexImage t = generate_phantoms(spec, 1)[0];
  CHECK(ssim(t, t) == doctest::Approx(1.0).epsilon(1e-12));
  ComplexImage flipped = t;
  for (std::size_t i = 0; i < t.re.size(); ++i) flipped.re[i] = -t.re[i] + 0.5;
  CHECK(ssim(flipped, t) < 1.0);
}

TEST_CASE("ssim agrees with the direct-window reference to 1e-6") {
  PhantomSpec spec;
  spec.size = 16;
  spec.seed = 7;
  auto imgs = generate_phantoms(spec, 2);
  ComplexImage x = imgs[0];
  Rng rng(11);
  for (std::size_t i = 0; i < x.re.size(); ++i) x.re[i] += 0.05 * rng.normal();
  const double got = ssim(x, imgs[1]);
  const double want = oracles::ssim_reference(x, imgs[1]);
  CHECK(std::fabs(got - want) < 1e-6);
}

TEST_CASE("config: parsing, defaults, canonical hash stability") {
  const std::string text =
      "# comment\n"
      "[mask]\n"
      "accel = 4\n"
      "center_frac = 0.08  # trailing comment\n"
      "\n"
      "[experiment]\n"
      "master_seed = 99\n"
      "methods = modl, smug\n";
  KeyValueConfig kv = KeyValueConfig::parse_string(text);
  CHECK(kv.get_double("mask", "accel", 0.0) == 4.0);
  CHECK(kv.get_str("missing", "key", "dflt") == "dflt");
  CHECK_THROWS(kv.require_str("missing", "key"));

  // reordering sections/keys leaves the hash unchanged
  const std::string reordered =
      "[experiment]\nmethods = modl, smug\nmaster_seed = 99\n[mask]\ncenter_frac = 0.08\naccel = 4\n";
  CHECK(kv.hash() == KeyValueConfig::parse_string(reordered).hash());
  // a value change does not
  KeyValueConfig kv2 = kv;
  kv2.set("mask", "accel", "8");
  CHECK(kv.hash() != kv2.hash());

  ExperimentConfig cfg = ExperimentConfig::from(kv);
  CHECK(cfg.master_seed == 99);
  REQUIRE(cfg.methods.size() == 2);
  CHECK(cfg.methods[1] == "smug");
  CHECK(cfg.unroll.n_steps == 8);  // default
}

TEST_CASE("config: malformed input errors") {
  CHECK_THROWS(KeyValueConfig::parse_string("[unterminated\n"));
  CHECK_THROWS(KeyValueConfig::parse_string("[s]\nnovalue\n"));
  KeyValueConfig kv = KeyValueConfig::parse_string("[s]\nk = abc\n");
  CHECK_THROWS(kv.get_double("s", "k", 0.0));
}

TEST_CASE("csv: quoting, 17-digit floats, round-trip through the reader") {
  const std::string path = "csv_roundtrip_test.csv";
  {
    CsvWriter w(path, {"name", "value"}, "deadbeef00000000", kCodeVersion);
    w.write_row({"plain", CsvWriter::fmt(1.0 / 3.0)});
    w.write_row({"with,comma", CsvWriter::fmt(-0.0000123456789012345)});
    w.write_row({"with\"quote", CsvWriter::fmt(12345.0)});
  }
  CsvFile f = read_csv(path);
  CHECK(f.meta.at("config_hash") == "deadbeef00000000");
  REQUIRE(f.rows.size() == 3);
  CHECK(f.rows[1][0] == "with,comma");
  CHECK(f.rows[2][0] == "with\"quote");
  CHECK(std::stod(f.rows[0][1]) == 1.0 / 3.0);  // 17 significant digits survive
  CHECK(std::stod(f.rows[1][1]) == -0.0000123456789012345);
  std::remove(path.c_str());
}

TEST_CASE("manifest: write and read back") {
  RunManifest m;
  m.command = "eval";
  m.config_hash = "0123456789abcdef";
  m.master_seed = 42;
  m.status = "complete";
  m.started_at = iso_timestamp_now();
  m.finished_at = m.started_at;
  m.outputs = {"eval_modl.csv"};
  write_manifest(".", "manifest_test", m);
  RunManifest back = read_manifest("./manifest_test.manifest.json");
  CHECK(back.command == "eval");
  CHECK(back.config_hash == m.config_hash);
  CHECK(back.master_seed == 42);
  CHECK(back.outputs.size() == 1);
  std::remove("./manifest_test.manifest.json");
}

TEST_CASE("dataset container round-trips bit-exactly") {
  PhantomSpec spec;
  spec.size = 16;
  spec.seed = 12;
  auto imgs = generate_phantoms(spec, 4);
  nlohmann::json meta;
  meta["n"] = 4;
  const std::string path = "dataset_roundtrip_test.bin";
  save_dataset(path, imgs, meta);
  nlohmann::json meta2;
  auto back = load_dataset(path, &meta2);
  REQUIRE(back.size() == 4);
  CHECK(meta2.at("n") == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(image_dist(imgs[i], back[i]) == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("model container: save_models / load_models with encoder") {
  DenoiserSpec dspec;
  dspec.n_layers = 2;
  dspec.hidden_channels = 4;
  DenoiserNet net = init_denoiser(dspec, 1);
  WeightEncoder enc = init_encoder(EncoderSpec{}, 2);
  const std::string path = "models_roundtrip_test.bin";
  nlohmann::json meta;
  meta["train"] = {{"epochs", 3}};
  save_models(path, "wsmug", net, &enc, nullptr, meta);
  MethodModels m = load_models(path);
  CHECK(m.method == ReconMethod::wsmug);
  REQUIRE(m.encoder.has_value());
  PhantomSpec pspec;
  pspec.size = 16;
  pspec.seed = 3;
  ComplexImage probe = generate_phantoms(pspec, 1)[0];
  CHECK(image_dist(denoise(net, probe), denoise(m.denoiser, probe)) == 0.0);
  CHECK(encode_weight(enc, probe) == encode_weight(*m.encoder, probe));
  std::remove(path.c_str());
}

TEST_SUITE_END();
