#pragma once

#include <initializer_list>
#include <string>

#include "harl/oracle.hpp"
#include "json.hpp"

namespace harl {

nlohmann::json game_to_json(const CooperativeMarkovGame& game);
CooperativeMarkovGame game_from_json(const nlohmann::json& doc);

nlohmann::json profile_to_json(const ValueProfile& profile);

// {"agents": [[[p(s, a) ...] ...] ...]}
nlohmann::json policy_to_json(const JointPolicy& policy);
JointPolicy policy_from_json(const nlohmann::json& doc);

// Throws ErrorCode::config for keys outside `known`.
void reject_unknown_keys(const nlohmann::json& doc, std::initializer_list<const char*> known,
                         const std::string& what);

// doc[key] converted to T, or `fallback` when absent. Type errors become
// ErrorCode::config.
template <class T>
T json_value(const nlohmann::json& doc, const char* key, T fallback) {
  if (!doc.contains(key)) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, std::string("bad field '") + key + "': " + e.what());
  }
}

nlohmann::json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace harl
