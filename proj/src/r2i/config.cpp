// Copyright (c) the r2i project authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "r2i/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "r2i/common.hpp"

namespace r2i {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_string(ss.str(), path);
}

Config Config::parse_string(const std::string& text,
                            const std::string& origin) {
  Config cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ArgError(origin + ":" + std::to_string(line_no) +
                     ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ArgError(origin + ":" + std::to_string(line_no) + ": empty key");
    if (cfg.values_.count(key))
      throw ArgError(origin + ":" + std::to_string(line_no) +
                     ": duplicate key '" + key + "'");
    cfg.values_[key] = value;
    cfg.lines_[key] = line_no;
  }
  return cfg;
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

std::string Config::describe(const std::string& key) const {
  auto it = lines_.find(key);
  return origin_ + ":" + (it == lines_.end() ? "?" : std::to_string(it->second)) +
         ": key '" + key + "'";
}

std::string Config::get_string(const std::string& key,
                               const std::string& dflt) {
  consumed_.insert(key);
  auto it = values_.find(key);
  return it == values_.end() ? dflt : it->second;
}

int64_t Config::get_int(const std::string& key, int64_t dflt) {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return dflt;
  try {
    size_t used = 0;
    const int64_t v = std::stoll(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ArgError(describe(key) + " is not an integer: '" + it->second + "'");
  }
}

double Config::get_double(const std::string& key, double dflt) {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return dflt;
  try {
    size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ArgError(describe(key) + " is not a number: '" + it->second + "'");
  }
}

bool Config::get_bool(const std::string& key, bool dflt) {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return dflt;
  std::string v = it->second;
  std::transform(v.begin(), v.end(), v.begin(), ::tolower);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ArgError(describe(key) + " is not a boolean: '" + it->second + "'");
}

std::vector<int64_t> Config::get_int_list(const std::string& key,
                                          std::vector<int64_t> dflt) {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return dflt;
  std::vector<int64_t> out;
  std::istringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stoll(item));
    } catch (const std::exception&) {
      throw ArgError(describe(key) + " has a non-integer element: '" + item +
                     "'");
    }
  }
  return out;
}

void Config::reject_unknown_keys() const {
  for (const auto& [key, value] : values_) {
    if (!consumed_.count(key))
      throw ArgError(describe(key) + " is not recognized");
  }
}

}  // namespace r2i
