#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "gradmdm/dynamic_net.hpp"

namespace gradmdm {

enum class CheckpointErrorKind {
  io,                // cannot open / write
  not_a_checkpoint,  // wrong magic line
  malformed,         // unparsable header or tensor line
  structure,         // tensor count, names or dims disagree with the architecture
  truncated,         // payload ends early
};

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  CheckpointErrorKind kind() const { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

// Text format, one record per line:
//
//   GRADMDM-CKPT v1
//   input 1 8 8
//   stem <in> <out>
//   block <skip|width> <in> <out> <cost> <layer>     (one per gate)
//   head <in> <out>
//   tau <value>
//   tensors <count>
//   <name> <rank> <dims...> <values...>            (one per tensor)
//
// Values are stored at 32-bit precision and printed with 9 significant digits.
void save_checkpoint(const DynamicNet& net, std::ostream& os);
void save_checkpoint(const DynamicNet& net, const std::filesystem::path& path);
DynamicNet load_checkpoint(std::istream& is);
DynamicNet load_checkpoint(const std::filesystem::path& path);

}  // namespace gradmdm
