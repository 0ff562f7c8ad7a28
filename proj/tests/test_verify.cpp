#include <gtest/gtest.h>

#include "gradmdm/cgm.hpp"
#include "gradmdm/verify.hpp"

using namespace gradmdm;

TEST(Verify, LibraryPassesEverySuite) {
  const auto reports = run_verify(VerifyOptions{});
  ASSERT_EQ(reports.size(), 4u);
  for (const auto& r : reports) {
    EXPECT_TRUE(r.ok()) << r.name << ": " << (r.failures.empty() ? "" : r.failures.front());
    EXPECT_GT(r.passed, 0u) << r.name;
  }
}

TEST(Verify, FaultyRejectionIsSurfaced) {
  VerifyOptions o;
  o.pairs = 20;
  o.geometry.reject = [](const Tensor& a, const Tensor& b) {
    Tensor t = reject(a, b);
    t[0] += 1e-3;
    return t;
  };
  const SuiteReport r = verify_geometry(o);
  EXPECT_FALSE(r.ok());
  EXPECT_FALSE(r.failures.empty());
}

TEST(Verify, FaultyProjectionIsSurfaced) {
  VerifyOptions o;
  o.pairs = 20;
  o.geometry.project = [](const Tensor& a, const Tensor& b) {
    Tensor t = project(a, b);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] *= 1.01;
    return t;
  };
  EXPECT_FALSE(verify_geometry(o).ok());
}
