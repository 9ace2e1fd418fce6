#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace metaroute {

// Placeholders: {task_name} for the task, {agent_documents} for the rendered
// context blocks of the selected agents.

inline constexpr std::string_view kRouterPromptTemplate =
    "Imagine you have a complex task that needs to be executed on an operating system.\n"
    "This task can be decomposed into sub-tasks corresponding to the model's capabilities.\n"
    "You have several agents with different specializations available.\n"
    "Requirements:\n"
    "The task is assigned to one agent, the model should return the one token of that agent.\n"
    "Now your task is: {task_name}";

inline constexpr std::string_view kManagerPromptTemplate =
    "Imagine you have a complex task that needs to be executed on an operating system.\n"
    "This task can be decomposed into sub-tasks corresponding to the model's capabilities.\n"
    "You have agents with different specializations available:\n"
    "{agent_documents}\n"
    "\n"
    "Requirements:\n"
    "The task requires multiple agents, the model should specify which sub-tasks each agent "
    "should handle.\n"
    "The model should ensure that the task assignment optimizes efficiency and effectiveness, "
    "considering the unique capabilities of each agent.\n"
    "return like:\n"
    "###AgentName1:compute the sum of data in a new sheet.###\n"
    "###AgentName2:upload the computed file to the google Drive###\n"
    "\n"
    "Be careful not to assign the same agent to perform tasks consecutively.\n"
    "don't return like this:\n"
    "###Agent1:compute the sum of data in a new sheet.###\n"
    "###Agent1:rename this sheet.###\n"
    "\n"
    "Now your task is: {task_name}";

inline constexpr std::string_view kModePromptTemplate =
    "Imagine you have a complex task that needs to be executed on an operating system.\n"
    "Analyze the task step by step and decide whether one specialized agent can complete it "
    "alone or whether it requires multiple agents working together.\n"
    "Answer with the single word router or manager.\n"
    "Now your task is: {task_name}";

inline constexpr std::string_view kStatePrefix = "Current system state: ";

std::string render_router_prompt(const std::string& task, const std::string& state);
std::string render_manager_prompt(const std::string& task, const std::string& state,
                                  const std::string& agent_documents);
std::string render_mode_prompt(const std::string& task, const std::string& state);

}  // namespace metaroute
