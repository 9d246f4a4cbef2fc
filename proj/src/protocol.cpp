#include "edge_mpc/protocol.hpp"

#include <cmath>

#include "edge_mpc/config.hpp"

namespace edge_mpc {

using nlohmann::json;

namespace {

template <int N>
json vector_json(const Eigen::Matrix<double, N, 1>& v)
{
  json out = json::array();
  for (int i = 0; i < N; ++i) {
    out.push_back(v(i));
  }
  return out;
}

const json& field(const json& doc, const char* key)
{
  auto it = doc.find(key);
  if (it == doc.end()) {
    throw ProtocolError(std::string("missing field '") + key + "'");
  }
  return *it;
}

double number(const json& doc, const char* key)
{
  const json& v = field(doc, key);
  if (!v.is_number()) {
    throw ProtocolError(std::string("field '") + key + "' must be a number");
  }
  const double d = v.get<double>();
  if (!std::isfinite(d)) {
    throw ProtocolError(std::string("field '") + key + "' must be finite");
  }
  return d;
}

std::uint64_t unsigned_integer(const json& doc, const char* key)
{
  const json& v = field(doc, key);
  if (!v.is_number_unsigned()) {
    throw ProtocolError(std::string("field '") + key + "' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

int integer(const json& doc, const char* key)
{
  const json& v = field(doc, key);
  if (!v.is_number_integer()) {
    throw ProtocolError(std::string("field '") + key + "' must be an integer");
  }
  return v.get<int>();
}

template <int N>
Eigen::Matrix<double, N, 1> fixed_vector(const json& v, const char* key)
{
  if (!v.is_array() || v.size() != static_cast<std::size_t>(N)) {
    throw ProtocolError(std::string("field '") + key + "' must hold " + std::to_string(N) + " numbers");
  }
  Eigen::Matrix<double, N, 1> out;
  for (int i = 0; i < N; ++i) {
    const json& e = v[static_cast<std::size_t>(i)];
    if (!e.is_number() || !std::isfinite(e.get<double>())) {
      throw ProtocolError(std::string("field '") + key + "' must hold finite numbers");
    }
    out(i) = e.get<double>();
  }
  return out;
}

struct ToJson
{
  json operator()(const HelloMsg& m) const
  {
    return {{"type", "hello"},
            {"protocol_version", m.protocol_version},
            {"mpc", {{"horizon", m.horizon}, {"dt", m.dt}}},
            {"trajectory", edge_mpc::to_json(m.trajectory)},
            {"t0", m.t0}};
  }
  json operator()(const HelloAckMsg& m) const { return {{"type", "hello-ack"}, {"protocol_version", m.protocol_version}}; }
  json operator()(const StateMsg& m) const
  {
    json out = {{"type", "state"}, {"seq", m.seq}, {"t_plant", m.t_plant}, {"x", vector_json<8>(m.x)}};
    if (m.u_applied) {
      out["u_applied"] = vector_json<3>(*m.u_applied);
    }
    if (!m.ref_window.empty()) {
      json window = json::array();
      for (const auto& x : m.ref_window) {
        window.push_back(vector_json<8>(x));
      }
      out["ref_window"] = std::move(window);
    }
    return out;
  }
  json operator()(const CommandMsg& m) const
  {
    return {{"type", "command"},       {"seq", m.seq},     {"t_plant_echo", m.t_plant_echo},
            {"t_edge_in", m.t_edge_in}, {"t_edge_out", m.t_edge_out}, {"u", vector_json<3>(m.u)},
            {"error", m.error}};
  }
  json operator()(const ErrorMsg& m) const { return {{"type", "error"}, {"reason", m.reason}}; }
};

}  // namespace

bool operator==(const HelloMsg& a, const HelloMsg& b)
{
  return a.protocol_version == b.protocol_version && a.horizon == b.horizon && a.dt == b.dt && a.t0 == b.t0 &&
         to_json(a.trajectory) == to_json(b.trajectory);
}

bool operator==(const HelloAckMsg& a, const HelloAckMsg& b)
{
  return a.protocol_version == b.protocol_version;
}

bool operator==(const StateMsg& a, const StateMsg& b)
{
  return a.seq == b.seq && a.t_plant == b.t_plant && a.x == b.x && a.u_applied == b.u_applied &&
         a.ref_window == b.ref_window;
}

bool operator==(const CommandMsg& a, const CommandMsg& b)
{
  return a.seq == b.seq && a.t_plant_echo == b.t_plant_echo && a.t_edge_in == b.t_edge_in &&
         a.t_edge_out == b.t_edge_out && a.u == b.u && a.error == b.error;
}

bool operator==(const ErrorMsg& a, const ErrorMsg& b)
{
  return a.reason == b.reason;
}

json to_json(const Message& msg)
{
  return std::visit(ToJson{}, msg);
}

Message message_from_json(const json& doc)
{
  if (!doc.is_object()) {
    throw ProtocolError("payload must be a JSON object");
  }
  const json& type_field = field(doc, "type");
  if (!type_field.is_string()) {
    throw ProtocolError("field 'type' must be a string");
  }
  const std::string type = type_field.get<std::string>();

  if (type == "hello") {
    HelloMsg m;
    m.protocol_version = integer(doc, "protocol_version");
    const json& mpc = field(doc, "mpc");
    if (!mpc.is_object()) {
      throw ProtocolError("field 'mpc' must be an object");
    }
    m.horizon = integer(mpc, "horizon");
    m.dt = number(mpc, "dt");
    try {
      m.trajectory = trajectory_from_json(field(doc, "trajectory"));
    } catch (const ConfigError& e) {
      throw ProtocolError(std::string("bad trajectory: ") + e.what());
    }
    m.t0 = number(doc, "t0");
    return m;
  }
  if (type == "hello-ack") {
    return HelloAckMsg{integer(doc, "protocol_version")};
  }
  if (type == "state") {
    StateMsg m;
    m.seq = unsigned_integer(doc, "seq");
    m.t_plant = number(doc, "t_plant");
    m.x = fixed_vector<8>(field(doc, "x"), "x");
    if (auto it = doc.find("u_applied"); it != doc.end()) {
      m.u_applied = fixed_vector<3>(*it, "u_applied");
    }
    if (auto it = doc.find("ref_window"); it != doc.end()) {
      if (!it->is_array()) {
        throw ProtocolError("field 'ref_window' must be an array");
      }
      for (const auto& x : *it) {
        m.ref_window.push_back(fixed_vector<8>(x, "ref_window"));
      }
    }
    return m;
  }
  if (type == "command") {
    CommandMsg m;
    m.seq = unsigned_integer(doc, "seq");
    m.t_plant_echo = number(doc, "t_plant_echo");
    m.t_edge_in = number(doc, "t_edge_in");
    m.t_edge_out = number(doc, "t_edge_out");
    m.u = fixed_vector<3>(field(doc, "u"), "u");
    if (auto it = doc.find("error"); it != doc.end()) {
      if (!it->is_boolean()) {
        throw ProtocolError("field 'error' must be a boolean");
      }
      m.error = it->get<bool>();
    }
    return m;
  }
  if (type == "error") {
    const json& reason = field(doc, "reason");
    if (!reason.is_string()) {
      throw ProtocolError("field 'reason' must be a string");
    }
    return ErrorMsg{reason.get<std::string>()};
  }
  throw ProtocolError("unknown message type '" + type + "'");
}

std::string encode(const Message& msg)
{
  const std::string payload = to_json(msg).dump();
  if (payload.size() > kMaxFrameBytes) {
    throw ProtocolError("frame exceeds maximum size");
  }
  const auto n = static_cast<std::uint32_t>(payload.size());
  std::string frame;
  frame.reserve(4 + payload.size());
  frame.push_back(static_cast<char>((n >> 24) & 0xff));
  frame.push_back(static_cast<char>((n >> 16) & 0xff));
  frame.push_back(static_cast<char>((n >> 8) & 0xff));
  frame.push_back(static_cast<char>(n & 0xff));
  frame += payload;
  return frame;
}

std::optional<Message> decode(std::string_view bytes, std::size_t& consumed)
{
  consumed = 0;
  if (bytes.size() < 4) {
    return std::nullopt;
  }
  std::uint32_t n = 0;
  for (int i = 0; i < 4; ++i) {
    n = (n << 8) | static_cast<unsigned char>(bytes[static_cast<std::size_t>(i)]);
  }
  if (n == 0) {
    throw ProtocolError("empty payload");
  }
  if (n > kMaxFrameBytes) {
    throw ProtocolError("frame length " + std::to_string(n) + " exceeds maximum");
  }
  if (bytes.size() < 4 + static_cast<std::size_t>(n)) {
    return std::nullopt;
  }
  const std::string_view payload = bytes.substr(4, n);
  json doc = json::parse(payload.begin(), payload.end(), nullptr, false);
  if (doc.is_discarded()) {
    throw ProtocolError("malformed JSON payload");
  }
  Message msg = message_from_json(doc);
  consumed = 4 + static_cast<std::size_t>(n);
  return msg;
}

std::optional<Message> FrameDecoder::next()
{
  std::size_t consumed = 0;
  auto msg = decode(buffer_, consumed);
  if (msg) {
    buffer_.erase(0, consumed);
  }
  return msg;
}

}  // namespace edge_mpc
