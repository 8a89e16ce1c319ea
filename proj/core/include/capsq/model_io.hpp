// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

// On-disk formats.
//
// Models are a UTF-8 JSON manifest plus a separate little-endian parameter
// blob. The manifest carries the format tag ("capsnet-f32/v1" or
// "capsnet-q7/v1"), the input shape, every layer's hyper-parameters and the
// byte span of its weights and bias inside the blob; quantized manifests add
// the fractional-bit formats and the shift schedule. Float blobs hold IEEE
// float32 values, quantized blobs raw int-8, both in kernel-native order:
// [out_c][kh][kw][in_c] for convolutions, [out_caps][in_caps][out_dim][in_dim]
// for capsule layers.
//
// Datasets are a single binary file:
//   offset 0   char[4]  magic "CQDS"
//   offset 4   u32      sample count
//   offset 8   u16      height
//   offset 10  u16      width
//   offset 12  u16      channels
//   offset 14  u8       dtype (0 = float32, 1 = int8)
//   offset 15  u8       reserved, 0
//   offset 16  samples, HWC, count * h * w * c * sizeof(dtype)
//   then       u8 label per sample
// All multi-byte integers and floats are little-endian.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "capsq/dataset.hpp"
#include "capsq/model.hpp"

namespace capsq {

inline constexpr std::string_view kFloatModelTag = "capsnet-f32/v1";
inline constexpr std::string_view kQuantModelTag = "capsnet-q7/v1";
inline constexpr char kDatasetMagic[4] = {'C', 'Q', 'D', 'S'};
inline constexpr std::size_t kDatasetHeaderBytes = 16;

// In-memory encodings. Decoders validate everything and throw FormatError or
// ShapeError naming the offending layer.
std::string encode_float_manifest(const FloatModel& model);
std::vector<std::uint8_t> encode_float_blob(const FloatModel& model);
FloatModel decode_float_model(std::string_view manifest, std::span<const std::uint8_t> blob);

std::string encode_quant_manifest(const QuantModel& model);
std::vector<std::uint8_t> encode_quant_blob(const QuantModel& model);
QuantModel decode_quant_model(std::string_view manifest, std::span<const std::uint8_t> blob);

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);

// Files.
void save_float_model(const FloatModel& model, const std::filesystem::path& manifest,
                      const std::filesystem::path& blob);
FloatModel load_float_model(const std::filesystem::path& manifest,
                            const std::filesystem::path& blob);

void save_quantized_model(const QuantModel& model, const std::filesystem::path& manifest,
                          const std::filesystem::path& blob);
QuantModel load_quantized_model(const std::filesystem::path& manifest,
                                const std::filesystem::path& blob);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::string read_file_text(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_text(const std::filesystem::path& path, std::string_view text);

}  // namespace capsq
