#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "navlab/core/tensor.hpp"

namespace navlab::io {

inline constexpr uint32_t kCheckpointVersion = 1;

// Versioned binary blob of named tensors. Writes are atomic
// (write-temp-then-rename). Loading validates the format version and the
// exact name/shape set, refusing partial or mismatched state.
void save_tensors(const std::filesystem::path& path,
                  const std::vector<std::pair<std::string, nd::Tensor>>& tensors);

std::vector<std::pair<std::string, nd::Tensor>> load_raw_tensors(const std::filesystem::path& path);

// Copies stored values into the given named parameters. Every name must be
// present with a matching shape and no extras may remain.
void load_tensors_into(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, nd::Tensor>>& dest);

// write-temp-then-rename for arbitrary file contents
void atomic_write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace navlab::io
