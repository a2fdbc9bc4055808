#include "support.hpp"

#include <chrono>
#include <cstdio>
#include <iomanip>

namespace acceptance {

void Runner::criterion(int number, const std::string& title, const std::function<std::string()>& body) {
  ++count_;
  const auto start = std::chrono::steady_clock::now();
  std::string detail;
  bool ok = true;
  try {
    detail = body();
  } catch (const std::exception& e) {
    ok = false;
    detail = e.what();
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("criterion %d [%s]: %s (%.1fs) %s\n", number, title.c_str(), ok ? "PASS" : "FAIL",
              elapsed, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures_;
}

int Runner::finish() const {
  std::printf("%d/%d criteria passed\n", count_ - failures_, count_);
  return failures_ == 0 ? 0 : 1;
}

std::string fmt2(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << v;
  return os.str();
}

}  // namespace acceptance
