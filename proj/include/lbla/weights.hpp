#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lbla/conformer.hpp"

namespace lbla {

// Weight file layout, all integers and reals little-endian:
//
//   magic        8 bytes  "LBLAWTS\0"
//   version      u32      kWeightFormatVersion
//   config       9 x u32  num_layers d_model d_ff heads conv_kernel
//                         attn_kind kernel use_reweight reweight_horizon
//   count        u32      number of tensors
//   index        count x { u32 name_len, name bytes, u64 rows, u64 cols }
//   data         every tensor's rows*cols f64 values, row-major, in index order
//
// Tensor names are "block<N>.<field>" as produced by for_each_tensor.
inline constexpr std::uint32_t kWeightFormatVersion = 1;

class WeightFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class WeightVersionError : public WeightFileError {
 public:
  using WeightFileError::WeightFileError;
};
class WeightTruncatedError : public WeightFileError {
 public:
  using WeightFileError::WeightFileError;
};
class WeightShapeIndexError : public WeightFileError {
 public:
  WeightShapeIndexError(std::string tensor, const std::string& detail)
      : WeightFileError("tensor '" + tensor + "': " + detail), tensor_(std::move(tensor)) {}
  const std::string& tensor() const { return tensor_; }

 private:
  std::string tensor_;
};
class WeightFormatError : public WeightFileError {
 public:
  using WeightFileError::WeightFileError;
};

struct EncoderModel {
  ModelConfig config;
  std::vector<ConformerBlockParams> blocks;
};

std::vector<std::uint8_t> serialize_weights(const std::vector<ConformerBlockParams>& blocks,
                                            const ModelConfig& cfg);
EncoderModel deserialize_weights(const std::vector<std::uint8_t>& bytes);

void save_weights(const std::filesystem::path& path,
                  const std::vector<ConformerBlockParams>& blocks, const ModelConfig& cfg);
EncoderModel load_weights(const std::filesystem::path& path);

// Flat "key = value" config text. '#' starts a comment. Unknown or repeated keys are errors.
// Keys: num_layers d_model d_ff heads conv_kernel attn_kind kernel use_reweight
// reweight_horizon. Missing keys keep their defaults.
ModelConfig parse_config(std::string_view text);
ModelConfig load_config(const std::filesystem::path& path);
std::string format_config(const ModelConfig& cfg);

}  // namespace lbla
