#ifndef TOMALIGN_GENERATION_PARAMS_HPP
#define TOMALIGN_GENERATION_PARAMS_HPP

#include <string>

#include <json.hpp>

#include "tomalign/error.hpp"

namespace tomalign {

/// Knobs passed to a generation backend. The aligner searches over
/// instruction, top_p and top_k; temperature is held at its configured value.
struct GenerationParams {
  std::string instruction;
  double temperature = 0.7;
  double top_p = 0.9;
  int top_k = 50;
  int max_tokens = 1024;

  void validate() const {
    if (!(temperature > 0.0)) throw RangeError("temperature must be > 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw RangeError("top_p must lie in (0,1]");
    if (top_k < 1) throw RangeError("top_k must be a positive integer");
    if (max_tokens < 1) throw RangeError("max_tokens must be a positive integer");
  }

  friend bool operator==(const GenerationParams&, const GenerationParams&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GenerationParams, instruction, temperature,
                                                top_p, top_k, max_tokens)

}  // namespace tomalign

#endif  // TOMALIGN_GENERATION_PARAMS_HPP
