#include "errl/search.hpp"

#include <stdexcept>

#include "errl/errors.hpp"

namespace errl {

SearchConfig SearchConfig::parse_mode(const std::string& text) {
  SearchConfig cfg;
  if (text == "greedy") {
    cfg.mode = SearchMode::Greedy;
    return cfg;
  }
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  int arg = -1;
  if (colon != std::string::npos) {
    try {
      std::size_t used = 0;
      arg = std::stoi(text.substr(colon + 1), &used);
      if (used != text.size() - colon - 1) arg = -1;
    } catch (const std::exception&) {
      arg = -1;
    }
  }
  if (head == "sample" && arg >= 1) {
    cfg.mode = SearchMode::Sample;
    cfg.sample_k = arg;
    return cfg;
  }
  if (head == "beam" && arg >= 1) {
    cfg.mode = SearchMode::Beam;
    cfg.beam_width = arg;
    return cfg;
  }
  throw UsageError("bad search mode '" + text + "' (expected greedy|sample:K|beam:W)");
}

std::string SearchConfig::mode_name() const {
  switch (mode) {
    case SearchMode::Greedy: return "greedy";
    case SearchMode::Sample: return "sample:" + std::to_string(sample_k);
    case SearchMode::Beam: return "beam:" + std::to_string(beam_width);
  }
  return "greedy";
}

double evaluate_gap(const std::vector<double>& lengths,
                    const std::vector<double>& reference_lengths) {
  if (lengths.size() != reference_lengths.size())
    throw std::invalid_argument("evaluate_gap: length/reference count mismatch");
  if (lengths.empty()) throw std::invalid_argument("evaluate_gap: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (reference_lengths[i] <= 0.0)
      throw std::invalid_argument("evaluate_gap: reference lengths must be positive");
    sum += (lengths[i] / reference_lengths[i] - 1.0) * 100.0;
  }
  return sum / static_cast<double>(lengths.size());
}

}  // namespace errl
