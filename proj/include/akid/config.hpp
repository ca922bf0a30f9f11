#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "akid/error.hpp"

namespace akid {

using Json = nlohmann::ordered_json;

// Reads a JSON object key by key. Every failure names the offending path, and
// finish() rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const Json& object, std::string path);

  const std::string& path() const { return path_; }
  std::string path(std::string_view key) const;
  bool has(std::string_view key) const;

  const Json& required(std::string_view key);
  // nullptr when absent or null.
  const Json* optional(std::string_view key);

  template <class T>
  T get(std::string_view key) {
    return convert<T>(required(key), path(key));
  }
  template <class T>
  T get(std::string_view key, T fallback) {
    const Json* value = optional(key);
    return value == nullptr ? fallback : convert<T>(*value, path(key));
  }

  void finish() const;

  template <class T>
  static T convert(const Json& value, const std::string& where);

 private:
  const Json& object_;
  std::string path_;
  std::set<std::string, std::less<>> seen_;
};

template <class T>
T ObjectReader::convert(const Json& value, const std::string& where) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!value.is_boolean()) throw ConfigError(where + ": expected a boolean");
    return value.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!value.is_string()) throw ConfigError(where + ": expected a string");
    return value.get<std::string>();
  } else if constexpr (std::is_same_v<T, double>) {
    if (!value.is_number()) throw ConfigError(where + ": expected a number");
    return value.get<double>();
  } else if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
    if (!value.is_number_integer() || (value.is_number_integer() && !value.is_number_unsigned() && value.get<std::int64_t>() < 0)) {
      throw ConfigError(where + ": expected a non-negative integer");
    }
    return static_cast<T>(value.get<std::int64_t>());
  } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
    if (!value.is_array()) throw ConfigError(where + ": expected an array of integers");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < value.size(); ++i) out.push_back(convert<std::size_t>(value[i], where + "[" + std::to_string(i) + "]"));
    return out;
  } else {
    static_assert(sizeof(T) == 0, "unsupported config value type");
  }
}

// Reads an object-valued member, or an empty object when absent.
Json object_or_empty(ObjectReader& reader, std::string_view key);

Json parse_json_file(const std::string& path);

}  // namespace akid
