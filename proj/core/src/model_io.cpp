// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

#include "capsq/model_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>

#include "capsq/error.hpp"

namespace capsq {
namespace {

using nlohmann::json;

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

// --- little-endian helpers --------------------------------------------------

template <class T>
T load_le(const std::uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    auto* b = reinterpret_cast<std::uint8_t*>(&v);
    std::reverse(b, b + sizeof(T));
  }
  return v;
}

template <class T>
void store_le(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.insert(out.end(), b, b + sizeof(T));
}

// --- manifest helpers -------------------------------------------------------

std::string layer_tag(std::size_t i) { return "layer " + std::to_string(i); }

json pair_json(int a, int b) { return json::array({a, b}); }

std::pair<int, int> pair_from(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != 2) {
    throw FormatError(std::string("'") + key + "' must be a two-element array");
  }
  return {v[0].get<int>(), v[1].get<int>()};
}

json spec_json(const LayerSpec& spec) {
  json j;
  if (const auto* c = std::get_if<ConvSpec>(&spec)) {
    j["kind"] = "conv";
    j["filters"] = c->filters;
    j["kernel"] = pair_json(c->kernel_h, c->kernel_w);
    j["stride"] = pair_json(c->stride_h, c->stride_w);
    j["padding"] = pair_json(c->pad_h, c->pad_w);
    j["activation"] = c->relu ? "relu" : "none";
  } else if (const auto* p = std::get_if<PrimaryCapsSpec>(&spec)) {
    j["kind"] = "primary_caps";
    j["capsules"] = p->capsules;
    j["dim"] = p->dim;
    j["kernel"] = pair_json(p->kernel_h, p->kernel_w);
    j["stride"] = pair_json(p->stride_h, p->stride_w);
    j["padding"] = pair_json(p->pad_h, p->pad_w);
  } else {
    const auto& k = std::get<CapsSpec>(spec);
    j["kind"] = "caps";
    j["capsules"] = k.capsules;
    j["dim"] = k.dim;
    j["routings"] = k.routings;
  }
  return j;
}

LayerSpec spec_from(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "conv") {
    ConvSpec c;
    c.filters = j.at("filters").get<int>();
    std::tie(c.kernel_h, c.kernel_w) = pair_from(j, "kernel");
    std::tie(c.stride_h, c.stride_w) = pair_from(j, "stride");
    std::tie(c.pad_h, c.pad_w) = pair_from(j, "padding");
    const auto act = j.at("activation").get<std::string>();
    if (act != "relu" && act != "none") throw FormatError("unknown activation '" + act + "'");
    c.relu = act == "relu";
    return c;
  }
  if (kind == "primary_caps") {
    PrimaryCapsSpec p;
    p.capsules = j.at("capsules").get<int>();
    p.dim = j.at("dim").get<int>();
    std::tie(p.kernel_h, p.kernel_w) = pair_from(j, "kernel");
    std::tie(p.stride_h, p.stride_w) = pair_from(j, "stride");
    std::tie(p.pad_h, p.pad_w) = pair_from(j, "padding");
    return p;
  }
  if (kind == "caps") {
    CapsSpec k;
    k.capsules = j.at("capsules").get<int>();
    k.dim = j.at("dim").get<int>();
    k.routings = j.at("routings").get<int>();
    return k;
  }
  throw FormatError("unknown layer kind '" + kind + "'");
}

json ref_json(const BlobRef& r) { return {{"offset", r.offset}, {"bytes", r.bytes}}; }

BlobRef ref_from(const json& j) {
  return {j.at("offset").get<std::size_t>(), j.at("bytes").get<std::size_t>()};
}

json shape_json(const FeatureShape& s) { return {{"h", s.h}, {"w", s.w}, {"c", s.c}}; }

FeatureShape shape_from(const json& j) {
  return {j.at("h").get<int>(), j.at("w").get<int>(), j.at("c").get<int>()};
}

json parse_manifest(std::string_view text, std::string_view expected_tag) {
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("format") || !j["format"].is_string()) {
    throw FormatError("manifest lacks a format tag");
  }
  const auto tag = j["format"].get<std::string>();
  if (tag != expected_tag) {
    throw FormatError("format tag '" + tag + "' is not '" + std::string(expected_tag) + "'");
  }
  return j;
}

// Runs fn, converting JSON access errors into FormatError with context.
template <class Fn>
auto with_context(const std::string& where, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw FormatError(where + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(where + ": " + e.what());
  }
}

// Blob spans, in layer order, must fit the blob exactly.
void check_blob_size(const json& layers, std::size_t declared, std::size_t actual) {
  if (actual < declared) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      for (const char* key : {"weights", "bias"}) {
        if (!layers[i].contains(key)) continue;
        const BlobRef r = with_context(layer_tag(i), [&] { return ref_from(layers[i][key]); });
        if (r.offset + r.bytes > actual) {
          throw FormatError("blob truncated: " + layer_tag(i) + " " + key + " needs bytes [" +
                            std::to_string(r.offset) + ", " + std::to_string(r.offset + r.bytes) +
                            ") but the blob holds " + std::to_string(actual));
        }
      }
    }
    throw FormatError("blob truncated: " + std::to_string(actual) + " of " +
                      std::to_string(declared) + " bytes");
  }
  if (actual > declared) {
    throw FormatError("blob has " + std::to_string(actual - declared) + " trailing bytes");
  }
}

Architecture arch_from(const json& j) {
  Architecture arch;
  arch.input = with_context("input", [&] { return shape_from(j.at("input")); });
  const json& layers = with_context("layers", [&]() -> const json& { return j.at("layers"); });
  if (!layers.is_array()) throw FormatError("'layers' must be an array");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    arch.layers.push_back(with_context(layer_tag(i), [&] { return spec_from(layers[i]); }));
  }
  arch.geometry();  // shape chain
  return arch;
}

void check_span(const BlobRef& r, std::size_t expected, std::size_t blob_size,
                const std::string& what) {
  if (r.bytes != expected) {
    throw FormatError(what + " span holds " + std::to_string(r.bytes) + " bytes, expected " +
                      std::to_string(expected));
  }
  if (r.offset > blob_size || r.bytes > blob_size - r.offset) {
    throw FormatError(what + " span exceeds the blob");
  }
}

void check_no_overlap(std::vector<BlobRef> refs) {
  std::erase_if(refs, [](const BlobRef& r) { return r.bytes == 0; });
  std::sort(refs.begin(), refs.end(),
            [](const BlobRef& a, const BlobRef& b) { return a.offset < b.offset; });
  for (std::size_t k = 1; k < refs.size(); ++k) {
    if (refs[k - 1].offset + refs[k - 1].bytes > refs[k].offset) {
      throw FormatError("blob spans overlap at offset " + std::to_string(refs[k].offset));
    }
  }
}

json shifts_json(const LayerShifts& s) {
  if (const auto* c = std::get_if<ConvShifts>(&s)) {
    return {{"bias", c->bias_shift}, {"output", c->out_shift}};
  }
  if (const auto* p = std::get_if<PrimaryCapsShifts>(&s)) {
    return {{"bias", p->bias_shift},
            {"output", p->out_shift},
            {"squash_input_frac_bits", p->squash_in_frac_bits}};
  }
  const auto& k = std::get<CapsShifts>(s);
  return {{"inputs_hat", k.inputs_hat_shift},
          {"caps_output", k.caps_output_shift},
          {"agreement_mul", k.agreement_mul_shift},
          {"agreement_add", k.agreement_add_shift},
          {"squash_input_frac_bits", k.squash_in_frac_bits},
          {"b_frac_bits", k.b_frac_bits}};
}

LayerShifts shifts_from(const json& j, const LayerSpec& spec) {
  if (std::holds_alternative<ConvSpec>(spec)) {
    return ConvShifts{j.at("bias").get<int>(), j.at("output").get<int>()};
  }
  if (std::holds_alternative<PrimaryCapsSpec>(spec)) {
    return PrimaryCapsShifts{j.at("bias").get<int>(), j.at("output").get<int>(),
                             j.at("squash_input_frac_bits").get<int>()};
  }
  CapsShifts k;
  k.inputs_hat_shift = j.at("inputs_hat").get<int>();
  k.caps_output_shift = j.at("caps_output").get<std::vector<int>>();
  k.agreement_mul_shift = j.at("agreement_mul").get<std::vector<int>>();
  k.agreement_add_shift = j.at("agreement_add").get<std::vector<int>>();
  k.squash_in_frac_bits = j.at("squash_input_frac_bits").get<std::vector<int>>();
  k.b_frac_bits = j.at("b_frac_bits").get<int>();
  return k;
}

}  // namespace

// ---------------------------------------------------------------------------
// Float model

std::string encode_float_manifest(const FloatModel& model) {
  model.validate();
  json j;
  j["format"] = kFloatModelTag;
  j["input"] = shape_json(model.arch.input);
  json layers = json::array();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    json lj = spec_json(model.arch.layers[i]);
    const std::size_t wb = 4 * model.params[i].weights.size();
    lj["weights"] = ref_json({offset, wb});
    offset += wb;
    if (!std::holds_alternative<CapsSpec>(model.arch.layers[i])) {
      const std::size_t bb = 4 * model.params[i].bias.size();
      lj["bias"] = ref_json({offset, bb});
      offset += bb;
    }
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);
  j["blob_bytes"] = offset;
  return j.dump(2) + "\n";
}

std::vector<std::uint8_t> encode_float_blob(const FloatModel& model) {
  model.validate();
  std::vector<std::uint8_t> out;
  for (const auto& p : model.params) {
    for (float v : p.weights) store_le(out, v);
    for (float v : p.bias) store_le(out, v);
  }
  return out;
}

FloatModel decode_float_model(std::string_view manifest, std::span<const std::uint8_t> blob) {
  const json j = parse_manifest(manifest, kFloatModelTag);
  FloatModel model;
  model.arch = arch_from(j);
  const auto geo = model.arch.geometry();
  const json& layers = j["layers"];
  const auto declared = with_context("blob_bytes", [&] { return j.at("blob_bytes").get<std::size_t>(); });
  check_blob_size(layers, declared, blob.size());

  auto read_floats = [&](const BlobRef& r) {
    std::vector<float> v(r.bytes / 4);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = load_le<float>(blob.data() + r.offset + 4 * k);
    return v;
  };

  std::vector<BlobRef> refs;
  for (std::size_t i = 0; i < geo.size(); ++i) {
    const std::string tag = layer_tag(i) + " (" + std::string(layer_kind_name(model.arch.layers[i])) + ")";
    FloatLayerParams p;
    with_context(tag, [&] {
      const BlobRef w = ref_from(layers[i].at("weights"));
      check_span(w, 4 * geo[i].weight_count, blob.size(), "weights");
      p.weights = read_floats(w);
      refs.push_back(w);
      if (geo[i].bias_count > 0 || layers[i].contains("bias")) {
        const BlobRef b = ref_from(layers[i].at("bias"));
        check_span(b, 4 * geo[i].bias_count, blob.size(), "bias");
        p.bias = read_floats(b);
        refs.push_back(b);
      }
      return 0;
    });
    model.params.push_back(std::move(p));
  }
  check_no_overlap(refs);
  model.validate();
  return model;
}

// ---------------------------------------------------------------------------
// Quantized model

std::string encode_quant_manifest(const QuantModel& model) {
  model.validate();
  json j;
  j["format"] = kQuantModelTag;
  j["input"] = shape_json(model.arch.input);
  j["input_frac_bits"] = model.input_fmt.frac_bits();
  json layers = json::array();
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const QLayer& l = model.layers[i];
    json lj = spec_json(model.arch.layers[i]);
    lj["weights"] = ref_json(l.weights);
    json fb = {{"weights", l.weight_fmt.frac_bits()}, {"output", l.out_fmt.frac_bits()}};
    if (!std::holds_alternative<CapsSpec>(model.arch.layers[i])) {
      lj["bias"] = ref_json(l.bias);
      fb["bias"] = l.bias_fmt.frac_bits();
    }
    lj["frac_bits"] = std::move(fb);
    lj["shifts"] = shifts_json(l.shifts);
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);
  j["blob_bytes"] = model.blob.size();
  return j.dump(2) + "\n";
}

std::vector<std::uint8_t> encode_quant_blob(const QuantModel& model) {
  std::vector<std::uint8_t> out(model.blob.size());
  std::memcpy(out.data(), model.blob.data(), out.size());
  return out;
}

QuantModel decode_quant_model(std::string_view manifest, std::span<const std::uint8_t> blob) {
  const json j = parse_manifest(manifest, kQuantModelTag);
  QuantModel model;
  model.arch = arch_from(j);
  const json& layers = j["layers"];
  const auto declared = with_context("blob_bytes", [&] { return j.at("blob_bytes").get<std::size_t>(); });
  check_blob_size(layers, declared, blob.size());
  model.input_fmt = with_context("input_frac_bits", [&] {
    return QFormat::with_frac_bits(j.at("input_frac_bits").get<int>());
  });

  for (std::size_t i = 0; i < model.arch.layers.size(); ++i) {
    const std::string tag = layer_tag(i) + " (" + std::string(layer_kind_name(model.arch.layers[i])) + ")";
    const json& lj = layers[i];
    QLayer l = with_context(tag, [&] {
      QLayer q;
      q.weights = ref_from(lj.at("weights"));
      const json& fb = lj.at("frac_bits");
      try {
        q.weight_fmt = QFormat::with_frac_bits(fb.at("weights").get<int>());
        q.out_fmt = QFormat::with_frac_bits(fb.at("output").get<int>());
        if (lj.contains("bias")) {
          q.bias = ref_from(lj.at("bias"));
          q.bias_fmt = QFormat::with_frac_bits(fb.at("bias").get<int>());
        }
      } catch (const ValueError& e) {
        throw FormatError(e.what());
      }
      q.shifts = shifts_from(lj.at("shifts"), model.arch.layers[i]);
      return q;
    });
    model.layers.push_back(l);
  }
  model.blob.resize(blob.size());
  std::memcpy(model.blob.data(), blob.data(), blob.size());
  model.validate();
  return model;
}

// ---------------------------------------------------------------------------
// Dataset

std::vector<std::uint8_t> encode_dataset(const Dataset& d) {
  const auto expect = d.size() * d.shape.size();
  const bool f = d.dtype == SampleType::kFloat32;
  if ((f ? d.f32.size() : d.i8.size()) != expect) {
    throw ShapeError("dataset: sample buffer does not match count x shape");
  }
  auto fits_u16 = [](int v) { return v >= 0 && v <= 0xFFFF; };
  if (!fits_u16(d.shape.h) || !fits_u16(d.shape.w) || !fits_u16(d.shape.c)) {
    throw ValueError("dataset: extents must fit 16 bits");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kDatasetHeaderBytes + expect * (f ? 4 : 1) + d.size());
  out.insert(out.end(), std::begin(kDatasetMagic), std::end(kDatasetMagic));
  store_le(out, static_cast<std::uint32_t>(d.size()));
  store_le(out, static_cast<std::uint16_t>(d.shape.h));
  store_le(out, static_cast<std::uint16_t>(d.shape.w));
  store_le(out, static_cast<std::uint16_t>(d.shape.c));
  out.push_back(static_cast<std::uint8_t>(d.dtype));
  out.push_back(0);
  if (f) {
    for (float v : d.f32) store_le(out, v);
  } else {
    for (q7_t v : d.i8) out.push_back(static_cast<std::uint8_t>(v));
  }
  out.insert(out.end(), d.labels.begin(), d.labels.end());
  return out;
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kDatasetHeaderBytes) {
    throw FormatError("dataset: " + std::to_string(bytes.size()) + " bytes is shorter than the header");
  }
  if (!std::equal(std::begin(kDatasetMagic), std::end(kDatasetMagic), bytes.begin())) {
    throw FormatError("dataset: bad magic");
  }
  const auto count = load_le<std::uint32_t>(bytes.data() + 4);
  Dataset d;
  d.shape.h = load_le<std::uint16_t>(bytes.data() + 8);
  d.shape.w = load_le<std::uint16_t>(bytes.data() + 10);
  d.shape.c = load_le<std::uint16_t>(bytes.data() + 12);
  const std::uint8_t dtype = bytes[14];
  if (dtype > 1) throw FormatError("dataset: unknown dtype " + std::to_string(dtype));
  if (bytes[15] != 0) throw FormatError("dataset: reserved header byte is not zero");
  d.dtype = static_cast<SampleType>(dtype);

  // Check the declared size against the real one before allocating anything.
  const std::uint64_t elem = dtype == 0 ? 4 : 1;
  const std::uint64_t values = std::uint64_t{count} * d.shape.size();
  const std::uint64_t expected = kDatasetHeaderBytes + values * elem + count;
  if (expected != bytes.size()) {
    throw FormatError("dataset: length mismatch, header implies " + std::to_string(expected) +
                      " bytes, file has " + std::to_string(bytes.size()));
  }

  const std::uint8_t* p = bytes.data() + kDatasetHeaderBytes;
  if (d.dtype == SampleType::kFloat32) {
    d.f32.resize(values);
    for (std::size_t k = 0; k < values; ++k) d.f32[k] = load_le<float>(p + 4 * k);
  } else {
    d.i8.resize(values);
    std::memcpy(d.i8.data(), p, values);
  }
  p += values * elem;
  d.labels.assign(p, p + count);
  return d;
}

// ---------------------------------------------------------------------------
// Files

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

std::string read_file_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

void write_file_text(const std::filesystem::path& path, std::string_view text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void save_float_model(const FloatModel& model, const std::filesystem::path& manifest,
                      const std::filesystem::path& blob) {
  write_file_text(manifest, encode_float_manifest(model));
  write_file_bytes(blob, encode_float_blob(model));
}

FloatModel load_float_model(const std::filesystem::path& manifest,
                            const std::filesystem::path& blob) {
  return decode_float_model(read_file_text(manifest), read_file_bytes(blob));
}

void save_quantized_model(const QuantModel& model, const std::filesystem::path& manifest,
                          const std::filesystem::path& blob) {
  write_file_text(manifest, encode_quant_manifest(model));
  write_file_bytes(blob, encode_quant_blob(model));
}

QuantModel load_quantized_model(const std::filesystem::path& manifest,
                                const std::filesystem::path& blob) {
  return decode_quant_model(read_file_text(manifest), read_file_bytes(blob));
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  write_file_bytes(path, encode_dataset(dataset));
}

Dataset load_dataset(const std::filesystem::path& path) {
  return decode_dataset(read_file_bytes(path));
}

}  // namespace capsq
