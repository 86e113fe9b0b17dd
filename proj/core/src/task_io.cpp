#include "blockforge/task_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "blockforge/errors.hpp"
#include "json.hpp"

namespace blockforge {

using nlohmann::json;

namespace {

int line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(offset), '\n'));
}

int line_of_field(const std::string& text, const std::string& field) {
  const std::size_t pos = text.find("\"" + field + "\"");
  return pos == std::string::npos ? 0 : line_of_offset(text, pos);
}

std::string num(double v) { return json(v).dump(); }

}  // namespace

Task parse_task(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw TaskParseError(origin, line_of_offset(text, e.byte), "", e.what());
  }
  auto fail = [&](const std::string& field, const std::string& msg) -> void {
    throw TaskParseError(origin, line_of_field(text, field), field, msg);
  };
  if (!doc.is_object()) throw TaskParseError(origin, 1, "", "task document must be a JSON object");

  static const std::vector<std::string> known = {"id", "targets", "obstacles", "shapes", "max_actions", "mu"};
  for (const auto& [key, value] : doc.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) fail(key, "unknown field");
  }
  for (const char* required : {"id", "targets", "shapes"}) {
    if (!doc.contains(required)) fail(required, "missing required field");
  }

  Task task;
  try {
    if (!doc["id"].is_string()) fail("id", "must be a string");
    task.id = doc["id"].get<std::string>();

    if (!doc["targets"].is_array()) fail("targets", "must be a list of [x, z]");
    for (const json& t : doc["targets"]) {
      if (!t.is_array() || t.size() != 2 || !t[0].is_number() || !t[1].is_number()) {
        fail("targets", "each target must be [x, z]");
      }
      task.targets.push_back({t[0].get<double>(), t[1].get<double>()});
    }

    if (doc.contains("obstacles")) {
      if (!doc["obstacles"].is_array()) fail("obstacles", "must be a list of [cx, cz, half_side]");
      for (const json& o : doc["obstacles"]) {
        if (!o.is_array() || o.size() != 3 || !o[0].is_number() || !o[1].is_number() || !o[2].is_number()) {
          fail("obstacles", "each obstacle must be [cx, cz, half_side]");
        }
        task.obstacles.push_back({{o[0].get<double>(), o[1].get<double>()}, o[2].get<double>()});
      }
    }

    if (!doc["shapes"].is_array()) fail("shapes", "must be a list of shape descriptors");
    for (const json& s : doc["shapes"]) {
      if (!s.is_object() || !s.contains("kind") || !s["kind"].is_string()) {
        fail("shapes", "each shape needs a string 'kind'");
      }
      const ShapeKind kind = shape_kind_from_string(s["kind"].get<std::string>());
      ShapeParams params;
      auto read = [&](const char* name, double& out) {
        if (!s.contains(name)) return;
        if (!s[name].is_number()) fail("shapes", std::string("'") + name + "' must be a number");
        out = s[name].get<double>();
      };
      if (kind == ShapeKind::square) {
        read("side", params.side);
      } else {
        read("bottom", params.bottom);
        read("top", params.top);
        read("height", params.height);
      }
      task.shapes.push_back(make_shape(kind, params));
    }

    if (doc.contains("max_actions")) {
      if (!doc["max_actions"].is_number_integer()) fail("max_actions", "must be an integer");
      task.max_actions = doc["max_actions"].get<int>();
    }
    if (doc.contains("mu")) {
      if (!doc["mu"].is_number()) fail("mu", "must be a number");
      task.mu = doc["mu"].get<double>();
    }
  } catch (const InvalidShape& e) {
    fail("shapes", e.what());
  }

  try {
    validate_task(task);
  } catch (const TaskParseError& e) {
    fail(e.field(), e.what());
  }
  return task;
}

Task load_task(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TaskParseError(path.string(), 0, "", "cannot open task file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_task(ss.str(), path.string());
}

std::string task_to_string(const Task& task) {
  std::ostringstream out;
  out << "{\n";
  out << "  \"id\": " << json(task.id).dump() << ",\n";

  auto list = [&out](const char* name, const std::vector<std::string>& rows, bool last = false) {
    out << "  \"" << name << "\": [";
    if (rows.empty()) {
      out << "]";
    } else {
      out << "\n";
      for (std::size_t i = 0; i < rows.size(); ++i) {
        out << "    " << rows[i] << (i + 1 < rows.size() ? ",\n" : "\n");
      }
      out << "  ]";
    }
    out << (last ? "\n" : ",\n");
  };

  std::vector<std::string> rows;
  for (const Vec2& t : task.targets) rows.push_back("[" + num(t.x) + ", " + num(t.z) + "]");
  list("targets", rows);

  rows.clear();
  for (const Obstacle& o : task.obstacles) {
    rows.push_back("[" + num(o.center.x) + ", " + num(o.center.z) + ", " + num(o.half_side) + "]");
  }
  list("obstacles", rows);

  rows.clear();
  for (const Shape& s : task.shapes) {
    if (s.kind == ShapeKind::square) {
      rows.push_back("{\"kind\": \"square\", \"side\": " + num(s.params.side) + "}");
    } else {
      rows.push_back("{\"kind\": \"trapezoid\", \"bottom\": " + num(s.params.bottom) +
                     ", \"top\": " + num(s.params.top) + ", \"height\": " + num(s.params.height) + "}");
    }
  }
  list("shapes", rows);

  out << "  \"max_actions\": " << task.max_actions << ",\n";
  out << "  \"mu\": " << num(task.mu) << "\n";
  out << "}\n";
  return out.str();
}

void save_task(const Task& task, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write task file " + path.string());
  out << task_to_string(task);
}

std::vector<Task> load_task_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw TaskParseError(dir.string(), 0, "", "task directory does not exist");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Task> tasks;
  tasks.reserve(files.size());
  for (const auto& f : files) tasks.push_back(load_task(f));
  return tasks;
}

}  // namespace blockforge
