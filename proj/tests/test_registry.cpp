#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "metaroute/agent_head.hpp"
#include "metaroute/registry.hpp"

using namespace metaroute;
using namespace metaroute::testing;

namespace {

AgentDocument small_doc(const std::string& name, const std::string& topic) {
  AgentDocument doc;
  doc.name = name;
  doc.applications = {topic + " Studio"};
  doc.capabilities = "Handles " + topic + " work.";
  doc.limitations = "Cannot operate outside the " + topic + " domain.";
  doc.demonstrations = {DemonstrationStub{"update the " + topic + " now", "", {}},
                        DemonstrationStub{"check the " + topic + " again", "", {}}};
  return doc;
}

}  // namespace

TEST_CASE("parses the SlideAgent enrollment form") {
  const AgentDocument doc = parse_document(slide_agent_form());
  CHECK(doc.name == "SlideAgent");
  REQUIRE(doc.applications.size() == 2);
  CHECK(doc.applications[0] == "Terminal");
  CHECK(doc.applications[1] == "LibreOffice Impress");
  CHECK(doc.capabilities.find("creating and modifying PowerPoint presentations") !=
        std::string::npos);
  CHECK(doc.limitations.find("Cannot handle GUI operations") != std::string::npos);
  REQUIRE(doc.demonstrations.size() == 2);
  CHECK(doc.demonstrations[0].text.find("'Conclusion'") != std::string::npos);
  CHECK(doc.demonstrations[0].image_paths ==
        std::vector<std::string>{"<path_to_demonstration_image_1>"});
  CHECK(doc.demonstrations[1].text.find("Company Confidential") != std::string::npos);
}

TEST_CASE("section headers are order- and case-insensitive") {
  const std::string text =
      "AgentName: MixedAgent\n"
      "# limitations\nnone worth noting\n"
      "# DEMONSTRATIONS\nDemonstration_1: do the thing\n"
      "# applications:\nSomething\n"
      "# Capabilities\ndoes things\n"
      "End!\n";
  const AgentDocument doc = parse_document(text);
  CHECK(doc.name == "MixedAgent");
  CHECK(doc.applications == std::vector<std::string>{"Something"});
  CHECK(doc.capabilities == "does things");
  CHECK(doc.limitations == "none worth noting");
  REQUIRE(doc.demonstrations.size() == 1);
  CHECK(doc.demonstrations[0].text == "do the thing");
}

TEST_CASE("both demonstration marker spellings are accepted") {
  const std::string text =
      "AgentName: MarkerAgent\n"
      "# Applications:\nA\n"
      "# Capabilities\nc\n"
      "# Limitations\nl\n"
      "# Demonstrations\n"
      "Demonstration_1: first thing\n"
      "Demostation_2: second thing\n"
      "End!\n";
  const AgentDocument doc = parse_document(text);
  REQUIRE(doc.demonstrations.size() == 2);
  CHECK(doc.demonstrations[0].text == "first thing");
  CHECK(doc.demonstrations[1].text == "second thing");
}

TEST_CASE("parse errors") {
  SUBCASE("missing capabilities") {
    const std::string text =
        "AgentName: BadAgent\n# Applications:\nA\n# Limitations\nl\n"
        "# Demonstrations\nDemonstration_1: x\nEnd!\n";
    CHECK_THROWS_AS(parse_document(text), MissingSection);
    try {
      parse_document(text);
    } catch (const MissingSection& e) {
      CHECK(e.section == "Capabilities");
    }
  }
  SUBCASE("zero demonstrations") {
    const std::string text =
        "AgentName: BadAgent\n# Applications:\nA\n# Capabilities\nc\n# Limitations\nl\n"
        "# Demonstrations\nEnd!\n";
    CHECK_THROWS_AS(parse_document(text), DocumentError);
  }
  SUBCASE("empty name") {
    const std::string text =
        "# Applications:\nA\n# Capabilities\nc\n# Limitations\nl\n"
        "# Demonstrations\nDemonstration_1: x\nEnd!\n";
    CHECK_THROWS_AS(parse_document(text), DocumentError);
  }
}

TEST_CASE("state lines round-trip through demonstrations") {
  const std::string text =
      "AgentName: StateAgent\n# Applications:\nA\n# Capabilities\nc\n# Limitations\nl\n"
      "# Demonstrations\n"
      "Demonstration_1: move the file\nState: desktop=cluttered\n"
      "End!\n";
  const AgentDocument doc = parse_document(text);
  REQUIRE(doc.demonstrations.size() == 1);
  CHECK(doc.demonstrations[0].text == "move the file");
  CHECK(doc.demonstrations[0].state_text == "desktop=cluttered");
}

TEST_CASE("parse of render is the identity on retained fields") {
  const AgentDocument parsed = parse_document(slide_agent_form());
  CHECK(parse_document(render_document(parsed)) == parsed);

  AgentDocument doc = small_doc("RoundTripAgent", "ledger");
  doc.demonstrations[0].state_text = "a=b";
  doc.demonstrations[1].image_paths = {"<path_to_demonstration_image_9>"};
  CHECK(parse_document(render_document(doc)) == doc);
}

TEST_CASE("enroll wires registry rows to head rows") {
  Vocabulary vocab = Vocabulary::from_corpus(tiny_corpus());
  FrozenModel model = build_model(tiny_config(vocab));
  AgentRegistry registry;
  AgentTokenHead head(model);

  auto [id1, head1] = enroll(registry, small_doc("AlphaAgent", "ledger"), head, 1);
  CHECK(id1 == "AlphaAgent");
  CHECK(registry.size() == 1);
  CHECK(head1.agent_count() == 1);

  auto [id2, head2] = enroll(registry, small_doc("BetaAgent", "deck"), head1, 2);
  CHECK(registry.size() == 2);
  CHECK(head2.agent_count() == 2);
  for (const auto& id : registry.agent_ids()) {
    CHECK(registry.row_of(id) == head2.row_of(id));
  }

  CHECK_THROWS_AS(enroll(registry, small_doc("AlphaAgent", "ledger"), head2, 3), DuplicateAgent);
}

TEST_CASE("twenty enrollments give a 20 x d trainable head") {
  Vocabulary vocab = Vocabulary::from_corpus(tiny_corpus());
  FrozenModel model = build_model(tiny_config(vocab));
  AgentRegistry registry;
  AgentTokenHead head(model);
  for (int i = 0; i < 20; ++i) {
    auto [id, extended] =
        enroll(registry, small_doc("Agent" + std::to_string(i), "topic" + std::to_string(i)),
               head, static_cast<std::uint64_t>(i));
    head = std::move(extended);
  }
  CHECK(head.trainable_parameter_count() == 20 * model.config().hidden_dim);
}

TEST_CASE("enrollment order determinism") {
  Vocabulary vocab = Vocabulary::from_corpus(tiny_corpus());
  FrozenModel model = build_model(tiny_config(vocab));
  auto build = [&] {
    AgentRegistry registry;
    AgentTokenHead head(model);
    for (const char* name : {"AlphaAgent", "BetaAgent", "GammaAgent"}) {
      auto [id, extended] = enroll(registry, small_doc(name, "topic"), head, 42);
      head = std::move(extended);
    }
    return std::pair{registry.agent_ids(), head.agent_checksum()};
  };
  const auto a = build();
  const auto b = build();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("render_context concatenates blocks in the given order") {
  Vocabulary vocab = Vocabulary::from_corpus(tiny_corpus());
  FrozenModel model = build_model(tiny_config(vocab));
  AgentRegistry registry;
  AgentTokenHead head(model);
  std::vector<std::string> names;
  for (int i = 0; i < 5; ++i) {
    const std::string name = "Agent" + std::to_string(i);
    auto [id, extended] = enroll(registry, small_doc(name, "topic" + std::to_string(i)), head,
                                 static_cast<std::uint64_t>(i));
    head = std::move(extended);
    names.push_back(name);
  }

  CHECK(render_context(registry, {}) == "");

  const AgentDocument& doc = registry.document("Agent2");
  const std::string one = render_context(registry, {"Agent2"});
  CHECK(one.find(doc.name) != std::string::npos);
  CHECK(one.find(doc.capabilities) != std::string::npos);
  CHECK(one.find(doc.limitations) != std::string::npos);

  const std::string five = render_context(registry, names);
  std::size_t blocks = 0, pos = 0;
  std::vector<std::size_t> positions;
  while ((pos = five.find("AgentName: ", pos)) != std::string::npos) {
    positions.push_back(pos);
    ++blocks;
    ++pos;
  }
  CHECK(blocks == 5);
  for (std::size_t i = 0; i < names.size(); ++i) {
    CHECK(five.find("AgentName: " + names[i]) == positions[i]);
  }

  CHECK_THROWS_AS(render_context(registry, {"NoSuchAgent"}), UnknownAgent);
}

TEST_CASE("removal tombstones the row without compacting") {
  Vocabulary vocab = Vocabulary::from_corpus(tiny_corpus());
  FrozenModel model = build_model(tiny_config(vocab));
  AgentRegistry registry;
  AgentTokenHead head(model);
  for (const char* name : {"AlphaAgent", "BetaAgent", "GammaAgent"}) {
    auto [id, extended] = enroll(registry, small_doc(name, "topic"), head, 1);
    head = std::move(extended);
  }

  const Matrix rows_before = head.agent_embeddings();
  remove_agent(registry, head, "BetaAgent");
  CHECK(registry.size() == 2);
  CHECK(registry.row_count() == 3);
  CHECK_FALSE(registry.contains("BetaAgent"));
  CHECK_THROWS_AS(registry.row_of("BetaAgent"), UnknownAgent);
  CHECK(head.is_tombstoned(1));
  CHECK(head.agent_embeddings() == rows_before);

  // tombstoned rows carry zero probability
  const Vector p = extended_distribution(Vector::Zero(head.hidden_dim()), head, false);
  CHECK(p[head.vocab_size() + 1] == 0.0);

  CHECK_THROWS_AS(remove_agent(registry, head, "BetaAgent"), UnknownAgent);
  // the name is never reused
  CHECK_THROWS_AS(enroll(registry, small_doc("BetaAgent", "topic"), head, 9), DuplicateAgent);
}

TEST_CASE("registry persistence round-trips") {
  TempDir tmp;
  Vocabulary vocab = Vocabulary::from_corpus(tiny_corpus());
  FrozenModel model = build_model(tiny_config(vocab));
  AgentRegistry registry;
  AgentTokenHead head(model);
  for (const char* name : {"AlphaAgent", "BetaAgent"}) {
    auto [id, extended] = enroll(registry, small_doc(name, "topic"), head, 1);
    head = std::move(extended);
  }
  remove_agent(registry, head, "AlphaAgent");

  const auto path = tmp.path / "registry.json";
  registry.save(path);
  const AgentRegistry loaded = AgentRegistry::load(path);
  CHECK(loaded.size() == 1);
  CHECK(loaded.row_count() == 2);
  CHECK(loaded.contains("BetaAgent"));
  CHECK_FALSE(loaded.contains("AlphaAgent"));
  CHECK(loaded.row_of("BetaAgent") == 1);
  CHECK(loaded.document("BetaAgent") == registry.document("BetaAgent"));
}
