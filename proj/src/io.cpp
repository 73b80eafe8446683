#include "errl/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "errl/errors.hpp"

namespace errl {

namespace {

constexpr const char* kSchemaTag = "v1";

std::string err_at(int line, const std::string& msg) {
  return "line " + std::to_string(line) + ": " + msg;
}

// key=value tokens after the schema tag.
std::map<std::string, std::string> parse_fields(const std::string& line, int line_number) {
  std::istringstream in(line);
  std::string tag;
  in >> tag;
  if (tag != kSchemaTag)
    throw DataError(err_at(line_number, "schema version mismatch: expected '" +
                                            std::string(kSchemaTag) + "', got '" + tag + "'"));
  std::map<std::string, std::string> fields;
  std::string token;
  while (in >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos)
      throw DataError(err_at(line_number, "malformed token '" + token + "'"));
    fields[token.substr(0, eq)] = token.substr(eq + 1);
  }
  return fields;
}

const std::string& require(const std::map<std::string, std::string>& fields,
                           const std::string& key, int line_number) {
  auto it = fields.find(key);
  if (it == fields.end())
    throw DataError(err_at(line_number, "missing field '" + key + "'"));
  return it->second;
}

long parse_long(const std::string& s, int line_number) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    throw DataError(err_at(line_number, "bad integer '" + s + "'"));
  return v;
}

double parse_double(const std::string& s, int line_number) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw DataError(err_at(line_number, "bad number '" + s + "'"));
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto next = s.find(sep, pos);
    if (next == std::string::npos) {
      out.push_back(s.substr(pos));
      break;
    }
    out.push_back(s.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

template <typename PerLine>
void for_each_record(const std::string& path, PerLine&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    fn(line, line_number);
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_instance(const Instance& inst) {
  std::string out = kSchemaTag;
  out += " kind=" + to_string(inst.kind);
  out += " n=" + std::to_string(inst.num_nodes());
  if (inst.has_depot()) out += " depot=" + std::to_string(inst.depot);
  if (inst.kind == ProblemKind::Cvrp) out += " capacity=" + std::to_string(inst.capacity);
  if (inst.kind == ProblemKind::Mrpff) out += " routes=" + std::to_string(inst.num_routes);
  out += " seed=" + std::to_string(inst.seed);
  out += " nodes=";
  for (int i = 0; i < inst.num_nodes(); ++i) {
    if (i) out += ',';
    out += format_double(inst.nodes(i, 0));
    out += ':';
    out += format_double(inst.nodes(i, 1));
  }
  if (inst.kind == ProblemKind::Cvrp) {
    out += " demands=";
    for (int i = 0; i < inst.num_nodes(); ++i) {
      if (i) out += ',';
      out += std::to_string(inst.demands[i]);
    }
  }
  return out;
}

Instance parse_instance(const std::string& line, int line_number) {
  const auto fields = parse_fields(line, line_number);
  Instance inst;
  inst.kind = problem_kind_from_string(require(fields, "kind", line_number));
  const int n = static_cast<int>(parse_long(require(fields, "n", line_number), line_number));
  if (n < 2) throw DataError(err_at(line_number, "instance needs at least 2 nodes"));
  inst.seed = static_cast<std::uint64_t>(
      std::strtoull(require(fields, "seed", line_number).c_str(), nullptr, 10));

  const auto coords = split(require(fields, "nodes", line_number), ',');
  if (static_cast<int>(coords.size()) != n)
    throw DataError(err_at(line_number, "expected " + std::to_string(n) + " nodes, got " +
                                            std::to_string(coords.size())));
  inst.nodes.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    const auto xy = split(coords[i], ':');
    if (xy.size() != 2) throw DataError(err_at(line_number, "bad coordinate '" + coords[i] + "'"));
    inst.nodes(i, 0) = parse_double(xy[0], line_number);
    inst.nodes(i, 1) = parse_double(xy[1], line_number);
  }

  if (inst.has_depot())
    inst.depot = static_cast<int>(parse_long(require(fields, "depot", line_number), line_number));
  if (inst.kind == ProblemKind::Cvrp) {
    inst.capacity =
        static_cast<int>(parse_long(require(fields, "capacity", line_number), line_number));
    const auto demands = split(require(fields, "demands", line_number), ',');
    if (static_cast<int>(demands.size()) != n)
      throw DataError(err_at(line_number, "expected " + std::to_string(n) + " demands"));
    inst.demands.resize(n);
    for (int i = 0; i < n; ++i)
      inst.demands[i] = static_cast<int>(parse_long(demands[i], line_number));
  }
  if (inst.kind == ProblemKind::Mrpff)
    inst.num_routes =
        static_cast<int>(parse_long(require(fields, "routes", line_number), line_number));

  try {
    check_instance(inst);
  } catch (const std::invalid_argument& e) {
    throw DataError(err_at(line_number, e.what()));
  }
  return inst;
}

std::vector<Instance> read_instances(const std::string& path) {
  std::vector<Instance> out;
  for_each_record(path, [&out](const std::string& line, int line_number) {
    out.push_back(parse_instance(line, line_number));
  });
  return out;
}

void write_instances(const std::string& path, const std::vector<Instance>& instances) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& inst : instances) out << format_instance(inst) << '\n';
}

std::vector<SolutionRecord> read_solutions(const std::string& path) {
  std::vector<SolutionRecord> out;
  for_each_record(path, [&out](const std::string& line, int line_number) {
    const auto fields = parse_fields(line, line_number);
    SolutionRecord rec;
    rec.instance_id =
        static_cast<int>(parse_long(require(fields, "instance", line_number), line_number));
    rec.length = parse_double(require(fields, "length", line_number), line_number);
    const auto& actions = require(fields, "actions", line_number);
    if (!actions.empty())
      for (const auto& tok : split(actions, ','))
        rec.actions.push_back(static_cast<int>(parse_long(tok, line_number)));
    out.push_back(std::move(rec));
  });
  return out;
}

void write_solutions(const std::string& path, const std::vector<SolutionRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& rec : records) {
    out << kSchemaTag << " instance=" << rec.instance_id << " actions=";
    for (std::size_t i = 0; i < rec.actions.size(); ++i) {
      if (i) out << ',';
      out << rec.actions[i];
    }
    out << " length=" << format_double(rec.length) << '\n';
  }
}

}  // namespace errl
