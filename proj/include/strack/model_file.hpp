#ifndef STRACK_MODEL_FILE_HPP_
#define STRACK_MODEL_FILE_HPP_

#include <filesystem>
#include <string>

#include "strack/tracker.hpp"

namespace strack {

inline constexpr int kModelFormatVersion = 1;

// Layout: an ASCII header, one record per line, then the raw payload.
//
//   STRACK-MODEL 1
//   int config.patch_extent 96
//   real config.search_scale
//   grid spatial.stage0.weights 16x3x3x3
//   ...
//   payload 123456
//   <123456 little-endian IEEE-754 doubles>
//
// Integers, enums and shapes live in the header; every real (grid entries and
// scalar reals alike) goes to the payload in header order, so a load restores
// the model bit for bit.
std::string serialize_model(const Model& model);

// Throws FormatError on a version mismatch, an unexpected record, a bad shape
// or a payload of the wrong length. `source` prefixes the messages.
Model deserialize_model(const std::string& bytes, const std::string& source = "model");

void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

}  // namespace strack

#endif  // STRACK_MODEL_FILE_HPP_
