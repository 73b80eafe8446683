#pragma once

#include <string>
#include <vector>

#include "errl/instance.hpp"
#include "errl/solution.hpp"

namespace errl {

// Line-oriented text files, one record per line, schema tag first.
//
//   v1 kind=cvrp n=21 depot=0 capacity=30 seed=9 nodes=x:y,... demands=0,3,...
//   v1 instance=0 actions=2,4,0,1,3 length=3.2984...
//
// Doubles are written with 17 significant digits so write/read round-trips
// are bit-exact for the artifact's own files.

std::string format_instance(const Instance& inst);
Instance parse_instance(const std::string& line, int line_number = 0);

std::vector<Instance> read_instances(const std::string& path);
void write_instances(const std::string& path, const std::vector<Instance>& instances);

// A solved instance as stored on disk; `instance_id` is the 0-based position
// of the instance in its paired instance file.
struct SolutionRecord {
  int instance_id = 0;
  std::vector<int> actions;
  double length = 0.0;
};

std::vector<SolutionRecord> read_solutions(const std::string& path);
void write_solutions(const std::string& path, const std::vector<SolutionRecord>& records);

std::string format_double(double v);

}  // namespace errl
