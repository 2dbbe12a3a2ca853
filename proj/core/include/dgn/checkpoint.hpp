#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "dgn/bank.hpp"
#include "dgn/network.hpp"

namespace dgn {

struct Checkpoint {
  ModelParams params;
  std::optional<MemoryBank> bank;
};

/// Binary container: magic, version, then tagged sections (MODL, BANK)
/// holding dimensions and little-endian IEEE-754 doubles. Layout in
/// docs/formats.md.
void save_checkpoint(std::ostream& out, const Checkpoint& ckpt);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws ParseError (index = byte offset) on a malformed container and
/// IoError when the file cannot be opened.
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dgn
