#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace test_support {

inline std::filesystem::path data_path(const std::string& relative) {
  return std::filesystem::path(CHATTOX_TEST_DATA) / relative;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline nlohmann::json read_json(const std::string& relative) {
  return nlohmann::json::parse(read_text(data_path(relative)));
}

}  // namespace test_support
