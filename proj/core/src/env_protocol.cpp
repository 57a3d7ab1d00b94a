#include "tsynth/env_protocol.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "tsynth/instance_io.hpp"

namespace tsynth {

using nlohmann::json;

namespace {

struct RequestError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json error(const std::string& message) { return {{"ok", false}, {"error", message}}; }

}  // namespace

EnvServer::EnvServer(const MdpModel& model, Defaults defaults)
    : model_(model), defaults_(defaults), env_(model_, std::move(defaults)) {}

json EnvServer::spec() const {
  const MdpConfig& c = model_.config();
  return {{"ok", true},
          {"protocol", "tsynth-env"},
          {"version", 1},
          {"state_size", model_.state_size()},
          {"action_size", model_.action_size()},
          {"action_low", -defaults_.max_decel.to_double()},
          {"action_high", defaults_.max_accel.to_double()},
          {"max_speed", c.max_speed},
          {"episode_cap", c.episode_cap},
          {"reward_success", c.reward_success},
          {"reward_failure", c.reward_failure},
          {"traffic_hash", traffic_hash(model_.roster())}};
}

json EnvServer::handle(const json& request) {
  json response;
  try {
    if (!request.is_object()) throw RequestError("request must be a JSON object");
    auto op_it = request.find("op");
    if (op_it == request.end() || !op_it->is_string()) throw RequestError("request needs a string 'op'");
    const std::string op = op_it->get<std::string>();
    if (op == "spec") {
      response = spec();
    } else if (op == "reset") {
      auto seed = request.find("seed");
      if (seed == request.end() || !seed->is_number_unsigned()) {
        throw RequestError("reset needs a non-negative integer 'seed'");
      }
      const MdpState& s = env_.reset(seed->get<std::uint64_t>());
      started_ = true;
      std::size_t cars = 0;
      for (std::size_t k = kTupleSize - 1; k < s.size(); k += kTupleSize) cars += s[k] == 1.0;
      response = {{"ok", true}, {"state", s}, {"info", {{"seed", seed->get<std::uint64_t>()}, {"cars", cars}}}};
    } else if (op == "step") {
      if (!started_) throw RequestError("step before reset");
      if (env_.done()) throw RequestError("episode is over; send reset");
      auto action = request.find("action");
      if (action == request.end() || !action->is_array() || action->size() != model_.action_size()) {
        throw RequestError("step needs an 'action' array of " + std::to_string(model_.action_size()) + " numbers");
      }
      MdpAction a;
      for (const auto& x : *action) {
        if (!x.is_number()) throw RequestError("action entries must be numbers");
        const double v = x.get<double>();
        if (!std::isfinite(v)) throw RequestError("action entries must be finite");
        a.push_back(v);
      }
      const auto r = env_.step(a);
      response = {{"ok", true},
                  {"state", r.outcome.next},
                  {"reward", r.outcome.reward},
                  {"terminated", r.outcome.terminated},
                  {"truncated", r.truncated},
                  {"info", {{"cause", to_string(r.outcome.cause)}, {"step", r.steps}}}};
    } else {
      throw RequestError("unknown op '" + op + "'");
    }
  } catch (const RequestError& e) {
    response = error(e.what());
  } catch (const std::exception& e) {
    response = error(std::string("internal error: ") + e.what());
  }
  if (request.is_object() && request.contains("id")) response["id"] = request["id"];
  return response;
}

std::string EnvServer::handle_line(const std::string& line) {
  json request;
  try {
    request = json::parse(line);
  } catch (const json::parse_error&) {
    return error("malformed JSON").dump();
  }
  return handle(request).dump();
}

std::size_t EnvServer::serve(std::istream& in, std::ostream& out) {
  std::size_t answered = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out << handle_line(line) << '\n' << std::flush;
    ++answered;
  }
  return answered;
}

}  // namespace tsynth
