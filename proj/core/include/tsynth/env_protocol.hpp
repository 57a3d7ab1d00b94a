#pragma once

#include <iosfwd>
#include <string>

#include <nlohmann/json.hpp>

#include "tsynth/config.hpp"
#include "tsynth/mdp.hpp"

namespace tsynth {

// Line-delimited JSON environment service. Requests:
//   {"op":"spec"}
//   {"op":"reset","seed":<u64>}
//   {"op":"step","action":[<9 numbers>]}
// Every response carries "ok"; failures are {"ok":false,"error":...} and
// leave the session usable. An "id" field in a request is echoed back.
class EnvServer {
 public:
  EnvServer(const MdpModel& model, Defaults defaults);

  nlohmann::json handle(const nlohmann::json& request);
  std::string handle_line(const std::string& line);
  // Serves until end of input; returns the number of requests answered.
  std::size_t serve(std::istream& in, std::ostream& out);

 private:
  nlohmann::json spec() const;

  const MdpModel& model_;
  Defaults defaults_;
  Environment env_;
  bool started_ = false;
};

}  // namespace tsynth
