#pragma once

#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "twinbridge/msgbus.hpp"

namespace tbtest {

inline std::string oracle_path(const std::string& name) { return std::string(TWINBRIDGE_ORACLE_DIR) + "/" + name; }
inline std::string scenario_path(const std::string& name) {
  return std::string(TWINBRIDGE_SCENARIO_DIR) + "/" + name;
}

inline std::vector<std::uint8_t> from_hex(const std::string& hex) {
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i + 1 < hex.size(); i += 2)
    out.push_back(static_cast<std::uint8_t>(std::stoul(hex.substr(i, 2), nullptr, 16)));
  return out;
}

inline std::string to_hex(const std::vector<std::uint8_t>& b) {
  static const char* d = "0123456789abcdef";
  std::string s;
  for (auto c : b) {
    s.push_back(d[c >> 4]);
    s.push_back(d[c & 15]);
  }
  return s;
}

inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    rows.push_back(std::move(row));
  }
  return rows;
}

// Random but valid bus message.
inline twinbridge::Message random_message(std::mt19937_64& rng, std::size_t max_payload = 256) {
  std::uniform_int_distribution<int> len(1, 40), ch(33, 126), kind(0, 5), byte(0, 255);
  std::uniform_int_distribution<std::size_t> plen(0, max_payload);
  std::uniform_int_distribution<std::int64_t> t(0, std::int64_t{1} << 50);
  twinbridge::Message m;
  m.topic = "/";
  const int n = len(rng);
  for (int i = 0; i < n; ++i) m.topic.push_back(static_cast<char>(ch(rng)));
  m.kind = static_cast<twinbridge::MessageKind>(kind(rng));
  m.payload.resize(plen(rng));
  for (auto& b : m.payload) b = static_cast<std::uint8_t>(byte(rng));
  m.publish_time = twinbridge::SimDuration{t(rng)};
  return m;
}

}  // namespace tbtest
