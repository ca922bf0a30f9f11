#include "akid/config.hpp"

#include <fstream>
#include <sstream>

namespace akid {

ObjectReader::ObjectReader(const Json& object, std::string path) : object_(object), path_(std::move(path)) {
  if (!object_.is_object()) throw ConfigError((path_.empty() ? std::string("config") : path_) + ": expected an object");
}

std::string ObjectReader::path(std::string_view key) const {
  return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
}

bool ObjectReader::has(std::string_view key) const { return object_.contains(key); }

const Json& ObjectReader::required(std::string_view key) {
  seen_.emplace(key);
  auto it = object_.find(key);
  if (it == object_.end() || it->is_null()) throw ConfigError(path(key) + ": required key is missing");
  return *it;
}

const Json* ObjectReader::optional(std::string_view key) {
  seen_.emplace(key);
  auto it = object_.find(key);
  if (it == object_.end() || it->is_null()) return nullptr;
  return &*it;
}

void ObjectReader::finish() const {
  for (const auto& [key, value] : object_.items()) {
    if (!seen_.contains(key)) throw ConfigError(path(key) + ": unknown key");
  }
}

Json object_or_empty(ObjectReader& reader, std::string_view key) {
  const Json* value = reader.optional(key);
  if (value == nullptr) return Json::object();
  if (!value->is_object()) throw ConfigError(reader.path(key) + ": expected an object");
  return *value;
}

Json parse_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream text;
  text << in.rdbuf();
  try {
    return Json::parse(text.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace akid
