#pragma once

// Unit-test helpers on top of oracles.hpp.

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "randproto/error.hpp"

namespace testing_support {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("randproto-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Runs `fn` and returns the library error code it raised; fails the test if
/// nothing (or something else) was thrown.
template <typename Fn>
randproto::Errc error_code_of(Fn&& fn) {
  try {
    fn();
  } catch (const randproto::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected randproto::Error";
  return randproto::Errc::kParameter;
}

#define EXPECT_ERRC(expr, code) EXPECT_EQ(::testing_support::error_code_of([&] { (void)(expr); }), code)

}  // namespace testing_support
