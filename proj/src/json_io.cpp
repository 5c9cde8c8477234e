#include "harl/json_io.hpp"

#include <fstream>
#include <sstream>

namespace harl {

using nlohmann::json;

namespace {

template <class T>
T get_field(const json& doc, const char* key) {
  if (!doc.contains(key)) fail(ErrorCode::config, std::string("missing field '") + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::config, std::string("bad field '") + key + "': " + e.what());
  }
}

}  // namespace

json game_to_json(const CooperativeMarkovGame& game) {
  json doc;
  doc["n_agents"] = game.n_agents();
  doc["n_states"] = game.n_states();
  doc["n_actions"] = game.action_counts();
  doc["gamma"] = game.gamma();
  json reward = json::array();
  json transition = json::array();
  for (int s = 0; s < game.n_states(); ++s) {
    json rrow = json::array();
    json tblock = json::array();
    for (int a = 0; a < game.n_joint(); ++a) {
      rrow.push_back(game.reward(s, a));
      std::vector<double> row(game.n_states(), 0.0);
      auto next = game.next_states(s, a);
      auto prob = game.next_probs(s, a);
      for (std::size_t k = 0; k < next.size(); ++k) row[next[k]] = prob[k];
      tblock.push_back(row);
    }
    reward.push_back(std::move(rrow));
    transition.push_back(std::move(tblock));
  }
  doc["reward"] = std::move(reward);
  doc["transition"] = std::move(transition);
  doc["initial_dist"] = game.initial_dist();
  if (game.episode_limit() > 0) doc["episode_limit"] = game.episode_limit();
  return doc;
}

CooperativeMarkovGame game_from_json(const json& doc) {
  if (!doc.is_object()) fail(ErrorCode::config, "game document must be a JSON object");
  static const char* known[] = {"n_agents", "n_states", "n_actions", "gamma", "reward",
                                "transition", "initial_dist", "episode_limit"};
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) fail(ErrorCode::config, "unknown game field '" + it.key() + "'");
  }
  try {
    CooperativeMarkovGame game(
        get_field<int>(doc, "n_agents"), get_field<int>(doc, "n_states"),
        get_field<std::vector<int>>(doc, "n_actions"), get_field<double>(doc, "gamma"),
        get_field<std::vector<std::vector<double>>>(doc, "reward"),
        get_field<std::vector<std::vector<std::vector<double>>>>(doc, "transition"),
        get_field<std::vector<double>>(doc, "initial_dist"));
    if (doc.contains("episode_limit")) game.set_episode_limit(get_field<int>(doc, "episode_limit"));
    return game;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::invalid_argument) fail(ErrorCode::config, e.what());
    throw;
  }
}

json profile_to_json(const ValueProfile& profile) {
  json doc;
  doc["V"] = profile.V;
  json q = json::array();
  for (int s = 0; s < profile.n_states; ++s)
    q.push_back(std::vector<double>(profile.Q.begin() + static_cast<std::ptrdiff_t>(s) * profile.n_joint,
                                    profile.Q.begin() + static_cast<std::ptrdiff_t>(s + 1) * profile.n_joint));
  doc["Q"] = std::move(q);
  doc["rho"] = profile.rho;
  doc["J"] = profile.J;
  return doc;
}

json policy_to_json(const JointPolicy& policy) {
  json agents = json::array();
  for (const auto& pi : policy) {
    json rows = json::array();
    for (int s = 0; s < pi.n_states(); ++s) {
      auto r = pi.row(s);
      rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    agents.push_back(std::move(rows));
  }
  return json{{"agents", agents}};
}

JointPolicy policy_from_json(const json& doc) {
  auto agents = get_field<std::vector<std::vector<std::vector<double>>>>(doc, "agents");
  JointPolicy out;
  for (const auto& rows : agents) {
    if (rows.empty() || rows[0].empty()) fail(ErrorCode::config, "empty policy table");
    int na = static_cast<int>(rows[0].size());
    std::vector<double> flat;
    for (const auto& r : rows) {
      if (static_cast<int>(r.size()) != na) fail(ErrorCode::config, "ragged policy table");
      flat.insert(flat.end(), r.begin(), r.end());
    }
    try {
      out.emplace_back(static_cast<int>(rows.size()), na, std::move(flat));
    } catch (const Error& e) {
      fail(ErrorCode::config, e.what());
    }
  }
  return out;
}

void reject_unknown_keys(const json& doc, std::initializer_list<const char*> known,
                         const std::string& what) {
  if (!doc.is_object()) fail(ErrorCode::config, what + " must be a JSON object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) fail(ErrorCode::config, "unknown " + what + " field '" + it.key() + "'");
  }
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::config, "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::config, "cannot parse '" + path + "': " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io, "cannot write '" + path + "'");
  out << text;
  if (!out) fail(ErrorCode::io, "write failed for '" + path + "'");
}

}  // namespace harl
