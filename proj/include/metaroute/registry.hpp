#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "metaroute/errors.hpp"

namespace metaroute {

class AgentTokenHead;

struct DemonstrationStub {
  std::string text;
  std::string state_text;
  std::vector<std::string> image_paths;  // kept verbatim, never interpreted

  friend bool operator==(const DemonstrationStub&, const DemonstrationStub&) = default;
};

/// Parsed enrollment form.
struct AgentDocument {
  std::string name;
  std::vector<std::string> applications;
  std::string capabilities;
  std::string limitations;
  std::vector<DemonstrationStub> demonstrations;

  friend bool operator==(const AgentDocument&, const AgentDocument&) = default;
};

/// Parses an enrollment form. Section headers (# Applications, # Capabilities,
/// # Limitations, # Demonstrations) are matched case-insensitively and in any
/// order; demonstration entries split on Demonstration_k:/Demostation_k:
/// markers; <path_to_...> image stanzas are lifted out of the text.
AgentDocument parse_document(const std::string& text);

/// Canonical text form of a document; parse_document(render_document(d)) == d.
std::string render_document(const AgentDocument& doc);

/// Insertion-ordered pool of enrolled agents. Ids are the document names;
/// removal tombstones the entry (its id and head row are never reused).
class AgentRegistry {
 public:
  /// Active agents (excludes removed ones).
  int size() const;
  /// Total issued rows, removed agents included.
  int row_count() const { return static_cast<int>(entries_.size()); }

  bool contains(const std::string& id) const;
  const AgentDocument& document(const std::string& id) const;
  /// Head row of an enrolled agent.
  int row_of(const std::string& id) const;
  /// Active agent ids in insertion order.
  std::vector<std::string> agent_ids() const;

  void save(const std::filesystem::path& path) const;
  static AgentRegistry load(const std::filesystem::path& path);

 private:
  struct Entry {
    AgentDocument doc;
    bool removed = false;
  };
  std::vector<Entry> entries_;          // row index == position
  std::map<std::string, int> row_map_;  // name -> row, tombstones included

  friend std::pair<std::string, AgentTokenHead> enroll(AgentRegistry&, const AgentDocument&,
                                                       AgentTokenHead, std::uint64_t);
  friend void remove_agent(AgentRegistry&, AgentTokenHead&, const std::string&);
};

/// Registers a document and appends exactly one head row for it. Returns the
/// issued agent id together with the extended head.
std::pair<std::string, AgentTokenHead> enroll(AgentRegistry& registry, const AgentDocument& doc,
                                              AgentTokenHead head, std::uint64_t seed);

/// Tombstones the agent: the registry entry is marked removed and the head
/// row is excluded from every distribution from now on. Trained rows of other
/// agents are untouched.
void remove_agent(AgentRegistry& registry, AgentTokenHead& head, const std::string& id);

/// Concatenated document blocks for the given agents, in the given order.
std::string render_context(const AgentRegistry& registry, const std::vector<std::string>& ids);

}  // namespace metaroute
