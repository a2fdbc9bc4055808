#pragma once

// Shared acceptance-suite plumbing: one PASS/FAIL line per criterion, with
// measured values inline, nonzero exit when anything fails.

#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>

namespace acceptance {

struct Failure : std::runtime_error {
  explicit Failure(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Failure(msg);
}

class Runner {
 public:
  // body returns the detail text shown on the PASS line
  void criterion(int number, const std::string& title, const std::function<std::string()>& body);
  int finish() const;

 private:
  int failures_ = 0;
  int count_ = 0;
};

std::string fmt2(double v);

}  // namespace acceptance
