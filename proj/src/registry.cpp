#include "metaroute/registry.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "metaroute/agent_head.hpp"

namespace metaroute {

using nlohmann::ordered_json;

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

/// "# Applications:" -> "applications"; non-headers come back empty.
std::string normalize_header(const std::string& line) {
  std::string t = trim(line);
  if (t.empty() || t[0] != '#') return {};
  t.erase(0, 1);
  t = trim(t);
  while (!t.empty() && (t.back() == ':' || t.back() == '!')) t.pop_back();
  return lower(trim(t));
}

/// Matches "Demonstration_3:" and the template's "Demostation_3:" spelling,
/// with an optional leading '#'. Returns the text after the colon.
bool match_demo_marker(const std::string& line, std::string* rest) {
  std::string t = trim(line);
  if (!t.empty() && t[0] == '#') t = trim(t.substr(1));
  const std::string low = lower(t);
  std::size_t pos = 0;
  if (low.rfind("demonstration", 0) == 0) {
    pos = std::string("demonstration").size();
  } else if (low.rfind("demostation", 0) == 0) {
    pos = std::string("demostation").size();
  } else {
    return false;
  }
  if (pos >= t.size() || t[pos] != '_') return false;
  ++pos;
  std::size_t digits = 0;
  while (pos < t.size() && std::isdigit(static_cast<unsigned char>(t[pos]))) {
    ++pos;
    ++digits;
  }
  if (digits == 0 || pos >= t.size() || t[pos] != ':') return false;
  *rest = trim(t.substr(pos + 1));
  return true;
}

bool is_image_stanza(const std::string& line) {
  const std::string t = trim(line);
  return t.size() > 2 && t.front() == '<' && t.back() == '>' &&
         lower(t).rfind("<path_to", 0) == 0;
}

std::vector<DemonstrationStub> parse_demonstrations(const std::vector<std::string>& lines) {
  std::vector<DemonstrationStub> stubs;
  DemonstrationStub current;
  bool open = false;
  auto flush = [&] {
    if (open) {
      current.text = trim(current.text);
      stubs.push_back(std::move(current));
      current = DemonstrationStub{};
      open = false;
    }
  };
  for (const auto& line : lines) {
    std::string rest;
    if (match_demo_marker(line, &rest)) {
      flush();
      open = true;
      current.text = rest;
      continue;
    }
    if (!open) continue;  // prose before the first marker is dropped
    if (is_image_stanza(line)) {
      current.image_paths.push_back(trim(line));
      continue;
    }
    const std::string low = lower(trim(line));
    if (low.rfind("state:", 0) == 0) {
      current.state_text = trim(trim(line).substr(6));
      continue;
    }
    const std::string t = trim(line);
    if (!t.empty()) {
      if (!current.text.empty()) current.text += ' ';
      current.text += t;
    }
  }
  flush();
  return stubs;
}

std::string join_section(const std::vector<std::string>& lines) {
  // verbatim body, stripped of surrounding blank lines
  std::size_t b = 0, e = lines.size();
  while (b < e && trim(lines[b]).empty()) ++b;
  while (e > b && trim(lines[e - 1]).empty()) --e;
  std::string out;
  for (std::size_t i = b; i < e; ++i) {
    if (i > b) out += '\n';
    out += lines[i];
  }
  return out;
}

}  // namespace

AgentDocument parse_document(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  AgentDocument doc;
  bool saw_name = false;
  bool saw_applications = false, saw_capabilities = false, saw_limitations = false,
       saw_demonstrations = false;

  std::string section;  // normalized name of the current section
  std::vector<std::string> applications_lines, capabilities_lines, limitations_lines,
      demonstration_lines;

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const std::string low = lower(trim(line));
    if (!saw_name && low.rfind("agentname:", 0) == 0) {
      doc.name = trim(trim(line).substr(std::string("agentname:").size()));
      saw_name = true;
      continue;
    }
    if (low == "end!" || low == "end") break;

    const std::string header = normalize_header(line);
    if (header == "applications") {
      section = header;
      saw_applications = true;
      continue;
    }
    if (header == "capabilities") {
      section = header;
      saw_capabilities = true;
      continue;
    }
    if (header == "limitations") {
      section = header;
      saw_limitations = true;
      continue;
    }
    if (header == "demonstrations" || header == "demostations") {
      section = "demonstrations";
      saw_demonstrations = true;
      continue;
    }

    if (section == "applications") {
      applications_lines.push_back(line);
    } else if (section == "capabilities") {
      capabilities_lines.push_back(line);
    } else if (section == "limitations") {
      limitations_lines.push_back(line);
    } else if (section == "demonstrations") {
      demonstration_lines.push_back(line);
    }
  }

  if (!saw_name || doc.name.empty()) throw DocumentError("enrollment form has an empty name");
  if (!saw_applications) throw MissingSection("Applications");
  if (!saw_capabilities) throw MissingSection("Capabilities");
  if (!saw_limitations) throw MissingSection("Limitations");
  if (!saw_demonstrations) throw MissingSection("Demonstrations");

  for (const auto& l : applications_lines) {
    std::stringstream ss(l);
    std::string part;
    while (std::getline(ss, part, ',')) {
      part = trim(part);
      if (!part.empty()) doc.applications.push_back(part);
    }
  }
  doc.capabilities = join_section(capabilities_lines);
  doc.limitations = join_section(limitations_lines);
  doc.demonstrations = parse_demonstrations(demonstration_lines);
  if (doc.demonstrations.empty()) {
    throw DocumentError("enrollment form has zero demonstrations");
  }
  return doc;
}

std::string render_document(const AgentDocument& doc) {
  std::string out;
  out += "AgentName: " + doc.name + "\n\n";
  out += "# Applications:\n";
  for (std::size_t i = 0; i < doc.applications.size(); ++i) {
    if (i > 0) out += ",";
    out += doc.applications[i];
  }
  out += "\n\n# Capabilities\n" + doc.capabilities;
  out += "\n\n# Limitations\n" + doc.limitations;
  out += "\n\n# Demonstrations\n";
  for (std::size_t i = 0; i < doc.demonstrations.size(); ++i) {
    const auto& demo = doc.demonstrations[i];
    std::string text = demo.text;
    std::replace(text.begin(), text.end(), '\n', ' ');
    out += "\nDemonstration_" + std::to_string(i + 1) + ": " + text + "\n";
    if (!demo.state_text.empty()) out += "State: " + demo.state_text + "\n";
    for (const auto& p : demo.image_paths) out += p + "\n";
  }
  out += "\nEnd!\n";
  return out;
}

// ---------------------------------------------------------------------------
// AgentRegistry

int AgentRegistry::size() const {
  int n = 0;
  for (const auto& e : entries_) {
    if (!e.removed) ++n;
  }
  return n;
}

bool AgentRegistry::contains(const std::string& id) const {
  auto it = row_map_.find(id);
  return it != row_map_.end() && !entries_[static_cast<std::size_t>(it->second)].removed;
}

const AgentDocument& AgentRegistry::document(const std::string& id) const {
  auto it = row_map_.find(id);
  if (it == row_map_.end() || entries_[static_cast<std::size_t>(it->second)].removed) {
    throw UnknownAgent(id);
  }
  return entries_[static_cast<std::size_t>(it->second)].doc;
}

int AgentRegistry::row_of(const std::string& id) const {
  auto it = row_map_.find(id);
  if (it == row_map_.end() || entries_[static_cast<std::size_t>(it->second)].removed) {
    throw UnknownAgent(id);
  }
  return it->second;
}

std::vector<std::string> AgentRegistry::agent_ids() const {
  std::vector<std::string> ids;
  for (const auto& e : entries_) {
    if (!e.removed) ids.push_back(e.doc.name);
  }
  return ids;
}

std::pair<std::string, AgentTokenHead> enroll(AgentRegistry& registry, const AgentDocument& doc,
                                              AgentTokenHead head, std::uint64_t seed) {
  if (doc.name.empty()) throw DocumentError("enrollment form has an empty name");
  if (registry.row_map_.count(doc.name)) throw DuplicateAgent(doc.name);
  if (doc.demonstrations.empty()) throw DocumentError("enrollment form has zero demonstrations");

  AgentTokenHead extended = extend_head(head, doc.name, seed);
  const int row = static_cast<int>(registry.entries_.size());
  if (extended.agent_count() - 1 != row) {
    throw Error("enroll: registry and head row indices diverged");
  }
  registry.entries_.push_back(AgentRegistry::Entry{doc, false});
  registry.row_map_.emplace(doc.name, row);
  return {doc.name, std::move(extended)};
}

void remove_agent(AgentRegistry& registry, AgentTokenHead& head, const std::string& id) {
  auto it = registry.row_map_.find(id);
  if (it == registry.row_map_.end() ||
      registry.entries_[static_cast<std::size_t>(it->second)].removed) {
    throw UnknownAgent(id);
  }
  registry.entries_[static_cast<std::size_t>(it->second)].removed = true;
  head.tombstone(it->second);
}

std::string render_context(const AgentRegistry& registry, const std::vector<std::string>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += ",\n\n";
    out += render_document(registry.document(ids[i]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

void AgentRegistry::save(const std::filesystem::path& path) const {
  ordered_json j;
  j["format_version"] = 1;
  j["kind"] = "agent_registry";
  ordered_json agents = ordered_json::array();
  for (const auto& e : entries_) {
    ordered_json a;
    a["name"] = e.doc.name;
    a["applications"] = e.doc.applications;
    a["capabilities"] = e.doc.capabilities;
    a["limitations"] = e.doc.limitations;
    ordered_json demos = ordered_json::array();
    for (const auto& d : e.doc.demonstrations) {
      demos.push_back({{"text", d.text}, {"state_text", d.state_text}, {"image_paths", d.image_paths}});
    }
    a["demonstrations"] = std::move(demos);
    a["removed"] = e.removed;
    agents.push_back(std::move(a));
  }
  j["agents"] = std::move(agents);

  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot open registry file for writing: " + path.string());
  out << j.dump(2) << '\n';
}

AgentRegistry AgentRegistry::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open registry file: " + path.string());
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("registry parse error: ") + e.what());
  }
  if (j.value("format_version", 0) != 1 || j.value("kind", "") != "agent_registry") {
    throw CheckpointError("registry: unsupported format");
  }
  AgentRegistry reg;
  for (const auto& a : j.at("agents")) {
    AgentDocument doc;
    doc.name = a.at("name").get<std::string>();
    doc.applications = a.at("applications").get<std::vector<std::string>>();
    doc.capabilities = a.at("capabilities").get<std::string>();
    doc.limitations = a.at("limitations").get<std::string>();
    for (const auto& d : a.at("demonstrations")) {
      DemonstrationStub stub;
      stub.text = d.at("text").get<std::string>();
      stub.state_text = d.at("state_text").get<std::string>();
      stub.image_paths = d.at("image_paths").get<std::vector<std::string>>();
      doc.demonstrations.push_back(std::move(stub));
    }
    const int row = static_cast<int>(reg.entries_.size());
    reg.entries_.push_back(Entry{std::move(doc), a.at("removed").get<bool>()});
    reg.row_map_.emplace(reg.entries_.back().doc.name, row);
  }
  return reg;
}

}  // namespace metaroute
