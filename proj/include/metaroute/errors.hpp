#pragma once

#include <stdexcept>
#include <string>

namespace metaroute {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct CheckpointError : Error {
  using Error::Error;
};

struct DocumentError : Error {
  using Error::Error;
};

struct MissingSection : DocumentError {
  explicit MissingSection(const std::string& section)
      : DocumentError("missing required section: " + section), section(section) {}
  std::string section;
};

struct DuplicateAgent : Error {
  explicit DuplicateAgent(const std::string& name) : Error("agent already enrolled: " + name) {}
};

struct UnknownAgent : Error {
  explicit UnknownAgent(const std::string& name) : Error("unknown agent: " + name) {}
};

struct GenerationFailed : Error {
  GenerationFailed(int round, const std::string& why)
      : Error("demonstration generation failed in round " + std::to_string(round) + ": " + why),
        round(round) {}
  int round;
};

struct RoutingUndecided : Error {
  using Error::Error;
};

struct UntrainedHead : Error {
  using Error::Error;
};

struct PlanParseError : Error {
  using Error::Error;
};

struct InvalidPlan : Error {
  using Error::Error;
};

struct AgentOutOfScope : Error {
  using Error::Error;
};

}  // namespace metaroute
