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

#ifndef R2I_CONFIG_HPP_
#define R2I_CONFIG_HPP_

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace r2i {

// Flat "key = value" text; '#' starts a comment; keys use dotted prefixes
// per module (model.*, train.*). Unknown keys are rejected once the consumer
// has registered every key it understands.
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text,
                             const std::string& origin = "<string>");

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& dflt);
  int64_t get_int(const std::string& key, int64_t dflt);
  double get_double(const std::string& key, double dflt);
  bool get_bool(const std::string& key, bool dflt);
  std::vector<int64_t> get_int_list(const std::string& key,
                                    std::vector<int64_t> dflt);

  // Throws ArgError naming any key never consumed by a getter.
  void reject_unknown_keys() const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::string describe(const std::string& key) const;

  std::string origin_;
  std::map<std::string, std::string> values_;
  std::map<std::string, int> lines_;
  std::set<std::string> consumed_;
};

}  // namespace r2i

#endif  // R2I_CONFIG_HPP_
