// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <json.hpp>

#include "capsq/error.hpp"
#include "capsq/model_io.hpp"
#include "capsq/quantizer.hpp"
#include "capsq/synth.hpp"
#include "test_util.hpp"

using namespace capsq;

namespace {

FloatModel one_layer_model() {
  Architecture arch;
  arch.input = {3, 3, 2};
  arch.layers = {PrimaryCapsSpec{2, 2, 3, 3, 1, 1, 0, 0}};
  FloatModel m = random_float_model(arch, 77);
  return m;
}

template <class Fn>
std::string error_text(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

}  // namespace

TEST_SUITE("model_io") {
  TEST_CASE("one-layer float model round-trips byte for byte") {
    const FloatModel m = one_layer_model();
    const std::string manifest = encode_float_manifest(m);
    const auto blob = encode_float_blob(m);
    const FloatModel back = decode_float_model(manifest, blob);
    CHECK(back == m);
    CHECK(encode_float_manifest(back) == manifest);
    CHECK(encode_float_blob(back) == blob);

    testutil::TempDir dir("io");
    save_float_model(m, dir.file("m.json"), dir.file("m.bin"));
    const FloatModel loaded = load_float_model(dir.file("m.json"), dir.file("m.bin"));
    CHECK(loaded == m);
    CHECK(read_file_text(dir.file("m.json")) == manifest);
  }

  TEST_CASE("float blob stores little-endian IEEE floats") {
    Architecture arch;
    arch.input = {1, 1, 1};
    arch.layers = {PrimaryCapsSpec{1, 1, 1, 1, 1, 1, 0, 0}};
    FloatModel m{arch, {{{1.0F}, {-2.0F}}}};
    const auto blob = encode_float_blob(m);
    CHECK(blob == std::vector<std::uint8_t>{0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x00, 0xC0});
  }

  TEST_CASE("load errors are distinct and name the layer") {
    const FloatModel m = random_float_model(*preset_architecture("mnist"), 3);
    const std::string manifest = encode_float_manifest(m);
    auto blob = encode_float_blob(m);

    auto truncated = blob;
    truncated.pop_back();
    const auto t = error_text([&] { (void)decode_float_model(manifest, truncated); });
    CHECK(contains(t, "truncated"));
    CHECK(contains(t, "layer 2"));

    auto longer = blob;
    longer.push_back(0);
    CHECK(contains(error_text([&] { (void)decode_float_model(manifest, longer); }), "trailing"));

    auto j = nlohmann::json::parse(manifest);
    j["format"] = "capsnet-f32/v0";
    CHECK(contains(error_text([&] { (void)decode_float_model(j.dump(), blob); }), "format tag"));
    CHECK_THROWS_AS(decode_quant_model(manifest, std::vector<std::uint8_t>(blob.begin(), blob.end())),
                    FormatError);

    j = nlohmann::json::parse(manifest);
    j["layers"][1]["kernel"] = {40, 40};
    try {
      (void)decode_float_model(j.dump(), blob);
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      CHECK(contains(e.what(), "layer 1"));
    }

    j = nlohmann::json::parse(manifest);
    j["layers"][0]["weights"]["bytes"] = 4;
    CHECK(contains(error_text([&] { (void)decode_float_model(j.dump(), blob); }), "layer 0"));

    j = nlohmann::json::parse(manifest);
    j["layers"][0]["activation"] = "gelu";
    CHECK_THROWS_AS(decode_float_model(j.dump(), blob), FormatError);

    CHECK_THROWS_AS(decode_float_model("{not json", blob), FormatError);
    j = nlohmann::json::parse(manifest);
    j["layers"][0].erase("filters");
    CHECK(contains(error_text([&] { (void)decode_float_model(j.dump(), blob); }), "layer 0"));
  }

  TEST_CASE("overlapping blob spans are rejected") {
    const FloatModel m = random_float_model(*preset_architecture("mnist"), 3);
    auto j = nlohmann::json::parse(encode_float_manifest(m));
    j["layers"][0]["bias"]["offset"] = 0;
    CHECK_THROWS_AS(decode_float_model(j.dump(), encode_float_blob(m)), FormatError);
  }

  TEST_CASE("MNIST manifest parameter count") {
    const Architecture arch = *preset_architecture("mnist");
    const std::size_t conv = 16 * 7 * 7 * 1 + 16;
    const std::size_t primary = 64 * 7 * 7 * 16 + 64;
    const std::size_t caps = 10 * 1024 * 6 * 4;
    CHECK(arch.parameter_count() == conv + primary + caps);
    const FloatModel m = random_float_model(arch, 1);
    CHECK(decode_float_model(encode_float_manifest(m), encode_float_blob(m)).arch.parameter_count() ==
          296800);
  }

  TEST_CASE("quantized models round-trip for every preset") {
    for (const auto& name : preset_names()) {
      CAPTURE(name);
      const Architecture arch = *preset_architecture(name);
      const QuantizeResult r =
          quantize_model(random_float_model(arch, 12), random_dataset(arch.input, 3, 13));
      const std::string manifest = encode_quant_manifest(r.model);
      const auto blob = encode_quant_blob(r.model);
      CHECK(blob.size() == arch.parameter_count());
      const QuantModel back = decode_quant_model(manifest, blob);
      CHECK(back == r.model);
      CHECK(encode_quant_manifest(back) == manifest);
      CHECK(encode_quant_blob(back) == blob);
    }
  }

  TEST_CASE("quantized manifest checks shift ranges and formats") {
    const Architecture arch = *preset_architecture("mnist");
    const QuantizeResult r = quantize_model(random_float_model(arch, 12), random_dataset(arch.input, 3, 13));
    const auto j0 = nlohmann::json::parse(encode_quant_manifest(r.model));
    const auto blob = encode_quant_blob(r.model);

    auto j = j0;
    j["layers"][0]["shifts"]["output"] = 40;
    CHECK(contains(error_text([&] { (void)decode_quant_model(j.dump(), blob); }), "layer 0"));

    j = j0;
    j["layers"][2]["shifts"]["caps_output"][1] = 40;
    CHECK_THROWS_AS(decode_quant_model(j.dump(), blob), FormatError);

    j = j0;
    j["layers"][2]["shifts"]["agreement_mul"] = {1};
    CHECK_THROWS_AS(decode_quant_model(j.dump(), blob), FormatError);

    j = j0;
    j["layers"][1]["frac_bits"]["weights"] = 35;
    CHECK_THROWS_AS(decode_quant_model(j.dump(), blob), FormatError);

    auto truncated = blob;
    truncated.resize(blob.size() - 1);
    CHECK(contains(error_text([&] { (void)decode_quant_model(j0.dump(), truncated); }), "truncated"));
  }

  TEST_CASE("dataset files") {
    Dataset d;
    d.shape = {2, 2, 1};
    d.dtype = SampleType::kInt8;
    d.i8.assign(4, 0);
    d.labels = {3};
    const auto bytes = encode_dataset(d);
    CHECK(bytes.size() == kDatasetHeaderBytes + 4 + 1);
    const Dataset back = decode_dataset(bytes);
    CHECK(back == d);
    CHECK(back.size() == 1);
    CHECK(std::all_of(back.i8.begin(), back.i8.end(), [](q7_t v) { return v == 0; }));
    CHECK(encode_dataset(back) == bytes);

    Dataset empty;
    empty.shape = {28, 28, 1};
    const Dataset e = decode_dataset(encode_dataset(empty));
    CHECK(e.empty());
    CHECK(e.shape == empty.shape);

    auto shorter = bytes;
    shorter.pop_back();
    CHECK(contains(error_text([&] { (void)decode_dataset(shorter); }), "length mismatch"));
    auto longer = bytes;
    longer.push_back(0);
    CHECK(contains(error_text([&] { (void)decode_dataset(longer); }), "length mismatch"));
    auto magic = bytes;
    magic[0] = 'X';
    CHECK(contains(error_text([&] { (void)decode_dataset(magic); }), "magic"));
    CHECK_THROWS_AS(decode_dataset(std::vector<std::uint8_t>(5, 0)), FormatError);

    // A header claiming 2^32-1 samples must fail on length, not on allocation.
    auto huge = bytes;
    huge[4] = huge[5] = huge[6] = huge[7] = 0xFF;
    CHECK(contains(error_text([&] { (void)decode_dataset(huge); }), "length mismatch"));

    const Dataset f = random_dataset({3, 2, 2}, 5, 1);
    CHECK(decode_dataset(encode_dataset(f)) == f);
    testutil::TempDir dir("ds");
    save_dataset(f, dir.file("f.cqds"));
    CHECK(load_dataset(dir.file("f.cqds")) == f);
    CHECK_THROWS_AS(load_dataset(dir.file("missing.cqds")), FormatError);
  }

  TEST_CASE("golden files re-serialize byte for byte") {
    const std::filesystem::path golden = CAPSQ_GOLDEN_DIR;
    for (const auto& name : preset_names()) {
      CAPTURE(name);
      const auto fj = read_file_text(golden / (name + ".json"));
      const auto fb = read_file_bytes(golden / (name + ".bin"));
      const FloatModel fm = decode_float_model(fj, fb);
      CHECK(fm.arch == *preset_architecture(name));
      CHECK(encode_float_manifest(fm) == fj);
      CHECK(encode_float_blob(fm) == fb);

      const auto qj = read_file_text(golden / (name + "_q.json"));
      const auto qb = read_file_bytes(golden / (name + "_q.bin"));
      const QuantModel qm = decode_quant_model(qj, qb);
      CHECK(encode_quant_manifest(qm) == qj);
      CHECK(encode_quant_blob(qm) == qb);

      const auto ds = read_file_bytes(golden / (name + ".cqds"));
      CHECK(encode_dataset(decode_dataset(ds)) == ds);
    }
  }
}
