#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "blockforge/env.hpp"

namespace blockforge {

// Task files are JSON documents:
//
//   {
//     "id": "task01",
//     "targets": [[x, z], ...],
//     "obstacles": [[cx, cz, half_side], ...],
//     "shapes": [{"kind": "square", "side": 1.0},
//                {"kind": "trapezoid", "bottom": 1.25, "top": 0.75, "height": 1.0}],
//     "max_actions": 10,
//     "mu": 0.6
//   }
//
// max_actions and mu are optional. Errors are reported as TaskParseError with
// the offending line and field.
Task parse_task(const std::string& text, const std::string& origin = "<string>");
Task load_task(const std::filesystem::path& path);

// Canonical text form; parse_task(task_to_string(t)) reproduces t and
// task_to_string is a fixed point on canonical input.
std::string task_to_string(const Task& task);
void save_task(const Task& task, const std::filesystem::path& path);

// Every *.json file in `dir`, sorted by file name.
std::vector<Task> load_task_dir(const std::filesystem::path& dir);

}  // namespace blockforge
