#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "metaroute/agent_head.hpp"
#include "metaroute/frozen_lm.hpp"
#include "metaroute/registry.hpp"

namespace metaroute::testing {

struct TempDir {
  std::filesystem::path path;

  TempDir() {
    auto base = std::filesystem::temp_directory_path();
    std::mt19937_64 rng(std::random_device{}());
    path = base / ("metaroute_test_" + std::to_string(rng()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline std::vector<std::string> tiny_corpus() {
  return {
      "please update the spreadsheet cell formula for me",
      "open the slide deck and change the layout",
      "route task words for the router prompt",
      "now your task is current system state",
  };
}

inline ModelConfig tiny_config(const Vocabulary& vocab, std::uint64_t seed = 7,
                               int hidden_dim = 32, int n_heads = 4) {
  ModelConfig cfg;
  cfg.vocab_size = vocab.size();
  cfg.hidden_dim = hidden_dim;
  cfg.n_heads = n_heads;
  cfg.n_layers = 2;
  cfg.max_context = 64;
  cfg.seed = seed;
  return cfg;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

struct CommandResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr combined
};

inline CommandResult run_command(const std::string& command) {
  CommandResult result;
  FILE* pipe = popen((command + " 2>&1").c_str(), "r");
  if (!pipe) return result;
  char buffer[4096];
  while (std::size_t n = fread(buffer, 1, sizeof(buffer), pipe)) {
    result.output.append(buffer, n);
    if (n < sizeof(buffer) && feof(pipe)) break;
  }
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

/// Canonical enrollment form used across registry tests.
inline std::string slide_agent_form() {
  return R"(AgentName: SlideAgent

# Applications:
Terminal,LibreOffice Impress

# Capabilities
Specializes in creating and modifying PowerPoint presentations using
Python's python-pptx library. It can handle tasks involving slide
creation, layout management, text and content insertion, and
formatting adjustments. Also capable of detecting open PowerPoint
presentations using Bash commands.

# Limitations
Cannot handle GUI operations, cannot perform tasks outside the
capabilities of the python-pptx library such as directly interacting
with embedded videos and complex animations. Additionally, cannot
modify LibreOffice Impress software defaults or preferences.

# Demostations

Demostation_1: Can you add a new slide at the end of my presentation
with the title 'Conclusion' and the text 'Thank you for your
attention'?

<path_to_demonstration_image_1>

Demostation_2: Can you add a footer with text 'Company Confidential'
to all slides in the current PowerPoint presentation?

<path_to_demonstration_image_2>

End!
)";
}

}  // namespace metaroute::testing
