#pragma once

#include <string>

#include "metaroute/metaagent.hpp"
#include "metaroute/self_instruct.hpp"

namespace metaroute {

/// HTTP client for an external generation service.
///
/// Endpoints, all POST with JSON bodies, relative to the configured base URL:
///   /demonstrations  {capability_text, seed_examples, n} -> {candidates: [...]}
///   /plan            {prompt} -> {text}
///   /mode            {prompt} -> {mode: "router"|"manager"}
class RemoteGenerator : public Generator, public PlanGenerator {
 public:
  RemoteGenerator(std::string base_url, int timeout_ms = 5000);

  std::vector<Demonstration> generate(const DemonstrationSet& seeds,
                                      const std::string& capability_text, int n) override;

  std::string complete_plan(const std::string& manager_prompt) override;
  std::optional<Mode> decide_mode(const std::string& mode_prompt) override;

 private:
  std::string post_json(const std::string& path, const std::string& body);

  std::string base_url_;
  int timeout_ms_;
};

}  // namespace metaroute
