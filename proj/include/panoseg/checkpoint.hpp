#pragma once

// Parameter container: "PCKP" | version u8 | count u32 | per parameter:
// name length u32, name bytes, one f32 PTNS record.

#include <filesystem>
#include <stdexcept>

#include "panoseg/numerics/params.hpp"

namespace panoseg::io {

// Names, order or shapes differ between the file and the model.
class CheckpointMismatch : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> encode_checkpoint(const nn::NamedParams& params);
void save_checkpoint(const std::filesystem::path& path, const nn::NamedParams& params);
// Copies stored values into `params` in place.
void load_checkpoint(const std::filesystem::path& path, const nn::NamedParams& params);

}  // namespace panoseg::io
