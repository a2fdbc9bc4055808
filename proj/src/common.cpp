#include "s2sp/common.hpp"

#include <fstream>
#include <sstream>

namespace s2sp {

std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for reading: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open file for writing: " + path);
  for (const auto& line : lines) out << line << '\n';
  if (!out) throw IoError("write failed: " + path);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> tokens;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

std::string join_ws(const std::vector<std::string>& tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

#ifndef S2SP_VERSION
#define S2SP_VERSION "0.1.0"
#endif

const char* version_string() { return S2SP_VERSION; }

}  // namespace s2sp
