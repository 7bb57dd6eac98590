#pragma once

// Binary parameter files.
//
// Layout (all integers little-endian u32):
//   "GDCW" | version | { name_len | name (UTF-8) | rank | dims[rank] | f32 payload }*
// Records run to end of file.

#include "gdc/graph.hpp"
#include "gdc/tensor.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gdc {

inline constexpr std::uint32_t kWeightFileVersion = 1;

struct WeightRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

std::vector<unsigned char> encode_weight_records(std::span<const WeightRecord> records);
std::vector<WeightRecord> decode_weight_records(std::span<const unsigned char> bytes);

void write_weight_file(const std::filesystem::path& path, std::span<const WeightRecord> records);
std::vector<WeightRecord> read_weight_file(const std::filesystem::path& path);

template <typename Scalar>
void save_parameters(const std::filesystem::path& path, std::span<Parameter<Scalar>* const> params);

/// Fills every parameter from the record of the same name. Missing records or
/// shape mismatches throw ShapeError.
template <typename Scalar>
void load_parameters(const std::filesystem::path& path, std::span<Parameter<Scalar>* const> params);

}  // namespace gdc
