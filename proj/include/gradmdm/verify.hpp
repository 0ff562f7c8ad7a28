#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gradmdm/tensor.hpp"

namespace gradmdm {

struct SuiteReport {
  std::string name;
  std::size_t passed = 0;
  std::size_t failed = 0;
  std::vector<std::string> failures;  // first few failing case descriptions

  bool ok() const { return failed == 0; }
};

/// Geometry operations under test. Defaults to the library's own; tests
/// swap one out to check that a fault is surfaced.
struct GeometryOps {
  std::function<Tensor(const Tensor&, const Tensor&)> project;
  std::function<Tensor(const Tensor&, const Tensor&)> reject;

  static GeometryOps library();
};

struct VerifyOptions {
  std::uint64_t seed = 0;
  std::size_t instances = 20;   // random instances per gradient case
  std::size_t pairs = 300;      // random pairs per geometry dimension
  GeometryOps geometry = GeometryOps::library();
};

SuiteReport verify_gradients(const VerifyOptions& options);
SuiteReport verify_geometry(const VerifyOptions& options);
SuiteReport verify_losses(const VerifyOptions& options);
SuiteReport verify_metrics(const VerifyOptions& options);

std::vector<SuiteReport> run_verify(const VerifyOptions& options);

}  // namespace gradmdm
