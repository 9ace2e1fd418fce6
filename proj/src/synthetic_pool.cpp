#include "metaroute/synthetic_pool.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "metaroute/prompts.hpp"

namespace metaroute {

namespace {

struct Theme {
  const char* name;
  const char* tag;
  std::vector<const char*> words;
};

// Content pools are pairwise disjoint; a unit test enforces it.
const std::vector<Theme>& themes() {
  static const std::vector<Theme> list = {
      {"SheetAgent", "sheets",
       {"spreadsheet", "cell", "formula", "column", "pivot", "workbook", "autosum", "tabulate",
        "ledger", "totals", "csv", "percentages"}},
      {"SlideAgent", "slides",
       {"slide", "presentation", "deck", "layout", "footer", "transition", "theme", "bullet",
        "title", "pptx", "animation", "rehearse"}},
      {"WordAgent", "writing",
       {"document", "paragraph", "heading", "docx", "margins", "font", "indent", "spacing",
        "manuscript", "typeset", "prose", "chapters"}},
      {"MailAgent", "mail",
       {"email", "inbox", "forwarding", "folder", "subject", "attachment", "compose", "signature",
        "spam", "recipients", "filter", "threads"}},
      {"BrowserAgent", "web",
       {"browser", "bookmark", "history", "cookies", "website", "url", "incognito", "downloads",
        "homepage", "cache", "extensions", "popups"}},
      {"MediaAgent", "media",
       {"video", "playback", "snapshot", "subtitles", "volume", "stream", "mp4", "audio", "clip",
        "recording", "mute", "frames"}},
      {"ImageAgent", "image",
       {"image", "brightness", "crop", "resize", "photo", "pixels", "contrast", "saturation",
        "rotate", "png", "layer", "palette"}},
      {"TerminalAgent", "shell",
       {"terminal", "bash", "shell", "permissions", "chmod", "directory", "script", "grep",
        "cron", "alias", "executable", "processes"}},
      {"CodeAgent", "code",
       {"code", "python", "debugger", "breakpoint", "syntax", "repository", "commit", "compile",
        "lint", "refactor", "variable", "workspace"}},
      {"CalendarAgent", "calendar",
       {"calendar", "event", "reminder", "schedule", "appointment", "meeting", "agenda",
        "timezone", "invite", "recurring", "deadline", "rsvp"}},
      {"MusicAgent", "music",
       {"music", "playlist", "song", "album", "artist", "shuffle", "lyrics", "genre", "tempo",
        "podcast", "equalizer", "tracks"}},
      {"MapAgent", "maps",
       {"map", "navigation", "destination", "traffic", "directions", "gps", "landmark",
        "distance", "commute", "transit", "waypoint", "itinerary"}},
      {"ShopAgent", "shopping",
       {"shopping", "cart", "checkout", "order", "coupon", "price", "wishlist", "delivery",
        "refund", "catalog", "merchant", "basket"}},
      {"SocialAgent", "social",
       {"tweet", "post", "followers", "profile", "hashtag", "feed", "notification", "mention",
        "timeline", "avatar", "repost", "biography"}},
      {"NotesAgent", "notes",
       {"note", "notebook", "sync", "tags", "archive", "snippet", "clipboard", "memo", "journal",
        "highlight", "annotation", "scratchpad"}},
      {"CloudAgent", "cloud",
       {"cloud", "upload", "storage", "quota", "backup", "restore", "bucket", "drive", "sharing",
        "gigabytes", "folders", "mirrors"}},
      {"ChatAgent", "chat",
       {"chat", "message", "contact", "emoji", "sticker", "reply", "voicenote", "channel",
        "typing", "unread", "ping", "groups"}},
      {"FinanceAgent", "finance",
       {"bank", "transaction", "balance", "transfer", "statement", "currency", "stocks",
        "portfolio", "dividend", "tax", "receipt", "expense"}},
      {"WeatherAgent", "weather",
       {"weather", "forecast", "temperature", "humidity", "rainfall", "sunrise", "sunset",
        "windspeed", "storm", "climate", "umbrella", "degrees"}},
      {"PrintAgent", "printing",
       {"printer", "print", "duplex", "toner", "tray", "queue", "scan", "copies", "collate",
        "a4", "landscape", "pagesize"}},
      {"TranslateAgent", "translate",
       {"translate", "language", "dictionary", "phrase", "grammar", "vocabulary",
        "pronunciation", "french", "spanish", "fluent", "idiom", "accent"}},
  };
  return list;
}

// Scaffold patterns shared by every agent; {} slots take pool words. Kept
// free of the discourse connectives the planner splits on.
const std::vector<const char*>& task_patterns() {
  static const std::vector<const char*> patterns = {
      "please update the {} {} and the {} {}",
      "can you check the {} {} and fix the {} {}",
      "set the {} {} to match the {} {}",
      "make a new {} with the {} {} and the {}",
      "open the {} {} and update the {} {} {}",
      "check all {} {} entries and update the {} {}",
  };
  return patterns;
}

std::string capitalize(std::string w) {
  if (!w.empty()) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
  return w;
}

std::string fill_pattern(const std::string& pattern, const std::vector<std::string>& pool,
                         std::mt19937_64& rng) {
  std::vector<std::size_t> picks;
  std::string out;
  std::size_t pos = 0;
  while (pos < pattern.size()) {
    const auto slot = pattern.find("{}", pos);
    if (slot == std::string::npos) {
      out += pattern.substr(pos);
      break;
    }
    out += pattern.substr(pos, slot - pos);
    std::size_t pick;
    do {
      pick = rng() % pool.size();
    } while (std::find(picks.begin(), picks.end(), pick) != picks.end());
    picks.push_back(pick);
    out += pool[pick];
    pos = slot + 2;
  }
  return out;
}

}  // namespace

int max_synthetic_agents() { return static_cast<int>(themes().size()); }

SyntheticPool make_synthetic_pool(int n_agents, std::uint64_t seed) {
  if (n_agents < 1 || n_agents > max_synthetic_agents()) {
    throw ConfigError("make_synthetic_pool: n_agents out of range");
  }
  SyntheticPool pool;
  std::mt19937_64 rng(seed);

  for (int i = 0; i < n_agents; ++i) {
    const Theme& theme = themes()[static_cast<std::size_t>(i)];
    std::vector<std::string> words(theme.words.begin(), theme.words.end());
    pool.word_pools.emplace(theme.name, words);

    AgentDocument doc;
    doc.name = theme.name;
    doc.applications = {capitalize(words[0]) + " Studio"};
    doc.capabilities = "Handles " + std::string(theme.tag) + " work such as " + words[0] + ", " +
                       words[1] + ", " + words[2] + ", " + words[3] + ", " + words[4] + " and " +
                       words[5] + " requests.";
    doc.limitations = "Cannot operate outside the " + std::string(theme.tag) +
                      " domain and has no access to other applications.";
    for (int d = 0; d < 10; ++d) {
      const auto& pattern = task_patterns()[static_cast<std::size_t>(d) % task_patterns().size()];
      doc.demonstrations.push_back(DemonstrationStub{fill_pattern(pattern, words, rng), "", {}});
    }
    pool.documents.push_back(doc);

    ScriptedAgent executor;
    executor.agent_id = theme.name;
    executor.capability_tags = {theme.tag};
    const std::vector<std::string> instructions = {
        "update the " + words[0] + " " + words[1] + " and the " + words[2] + " " + words[3],
        "check the " + words[4] + " " + words[5] + " and refresh the " + words[6] + " " +
            words[7],
        "make a new " + words[8] + " from the " + words[9] + " " + words[10] + " " + words[11],
    };
    for (int t = 0; t < 3; ++t) {
      TaskTemplate tmpl;
      tmpl.agent_id = theme.name;
      tmpl.instruction = instructions[static_cast<std::size_t>(t)];
      tmpl.required_tags = {theme.tag};
      // state keys carry the agent's own vocabulary so serialized snapshots
      // stay informative about which agent owns them
      const std::string key =
          std::string(theme.tag) + "." + words[static_cast<std::size_t>(4 * t % 12)];
      tmpl.writes = {{key, words[static_cast<std::size_t>((4 * t + 1) % 12)] + "-updated"}};
      tmpl.initial_state = {{key, words[static_cast<std::size_t>((4 * t + 1) % 12)] + "-pending"}};
      executor.writable_keys.insert(key);
      pool.templates.push_back(std::move(tmpl));
    }
    pool.executors.emplace(theme.name, std::move(executor));
  }
  return pool;
}

std::string sample_task_text(const SyntheticPool& pool, const std::string& agent_id,
                             std::mt19937_64& rng) {
  auto it = pool.word_pools.find(agent_id);
  if (it == pool.word_pools.end()) throw UnknownAgent(agent_id);
  const auto& patterns = task_patterns();
  const auto& pattern = patterns[rng() % patterns.size()];
  return fill_pattern(pattern, it->second, rng);
}

DemonstrationSet sample_demo_set(const SyntheticPool& pool, const std::string& agent_id, int size,
                                 std::uint64_t seed) {
  DemonstrationSet set(agent_id);
  std::mt19937_64 rng(seed);

  // Demonstrations carry the same kind of state snapshots the benchmark
  // serializes, so trained rows see state keys in-distribution.
  std::vector<std::string> states;
  for (const auto& tmpl : pool.templates) {
    if (tmpl.agent_id == agent_id) states.push_back(state_text(tmpl.initial_state));
  }

  int attempts = 0;
  while (static_cast<int>(set.size()) < size) {
    if (++attempts > 100 * size) {
      throw Error("sample_demo_set: could not draw enough distinct tasks");
    }
    std::string state;
    if (!states.empty() && rng() % 10 < 3) state = states[rng() % states.size()];
    set.add(Demonstration{sample_task_text(pool, agent_id, rng), state}, Provenance::seed());
  }
  return set;
}

std::vector<std::string> vocabulary_corpus(const SyntheticPool& pool) {
  std::vector<std::string> corpus;
  for (const auto& doc : pool.documents) corpus.push_back(render_document(doc));
  for (const auto& tmpl : pool.templates) {
    corpus.push_back(tmpl.instruction);
    corpus.push_back(state_text(tmpl.initial_state));
    for (const auto& [k, v] : tmpl.writes) corpus.push_back(k + " " + v);
  }
  for (const auto* pattern : task_patterns()) corpus.emplace_back(pattern);
  for (const auto& w : ReferenceGenerator::paraphrase_words()) corpus.push_back(w);
  corpus.emplace_back(kRouterPromptTemplate);
  corpus.emplace_back(kManagerPromptTemplate);
  corpus.emplace_back(kModePromptTemplate);
  corpus.emplace_back(kStatePrefix);
  corpus.emplace_back("first and then after that also afterwards");
  return corpus;
}

}  // namespace metaroute
