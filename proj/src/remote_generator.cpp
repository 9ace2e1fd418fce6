#include "metaroute/remote_generator.hpp"

#include <httplib.h>
#include <json.hpp>

namespace metaroute {

using nlohmann::json;

RemoteGenerator::RemoteGenerator(std::string base_url, int timeout_ms)
    : base_url_(std::move(base_url)), timeout_ms_(timeout_ms) {
  if (base_url_.empty()) throw ConfigError("remote generator: empty endpoint");
}

std::string RemoteGenerator::post_json(const std::string& path, const std::string& body) {
  httplib::Client client(base_url_);
  client.set_connection_timeout(0, timeout_ms_ * 1000);
  client.set_read_timeout(0, timeout_ms_ * 1000);
  client.set_write_timeout(0, timeout_ms_ * 1000);

  auto res = client.Post(path, body, "application/json");
  if (!res) {
    throw Error("remote generator: request to " + base_url_ + path +
                " failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error("remote generator: " + base_url_ + path + " returned status " +
                std::to_string(res->status));
  }
  return res->body;
}

std::vector<Demonstration> RemoteGenerator::generate(const DemonstrationSet& seeds,
                                                     const std::string& capability_text, int n) {
  json body;
  body["capability_text"] = capability_text;
  json examples = json::array();
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    examples.push_back(
        {{"task_text", seeds.at(i).task_text}, {"state_text", seeds.at(i).state_text}});
  }
  body["seed_examples"] = std::move(examples);
  body["n"] = n;

  const std::string response = post_json("/demonstrations", body.dump());
  std::vector<Demonstration> out;
  try {
    const json j = json::parse(response);
    for (const auto& c : j.at("candidates")) {
      out.push_back(Demonstration{c.at("task_text").get<std::string>(),
                                  c.value("state_text", std::string{})});
    }
  } catch (const json::exception& e) {
    throw Error(std::string("remote generator: malformed /demonstrations response: ") + e.what());
  }
  return out;
}

std::string RemoteGenerator::complete_plan(const std::string& manager_prompt) {
  const std::string response = post_json("/plan", json{{"prompt", manager_prompt}}.dump());
  try {
    return json::parse(response).at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(std::string("remote generator: malformed /plan response: ") + e.what());
  }
}

std::optional<Mode> RemoteGenerator::decide_mode(const std::string& mode_prompt) {
  const std::string response = post_json("/mode", json{{"prompt", mode_prompt}}.dump());
  std::string mode;
  try {
    mode = json::parse(response).at("mode").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(std::string("remote generator: malformed /mode response: ") + e.what());
  }
  if (mode == "router") return Mode::Router;
  if (mode == "manager") return Mode::Manager;
  throw Error("remote generator: unknown mode '" + mode + "'");
}

}  // namespace metaroute
