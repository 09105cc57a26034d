#include <charconv>
#include <sstream>

#include "qkdauth/errors.hpp"
#include "qkdauth/transport.hpp"

namespace qkdauth::transport {

Bytes WireMessage::encode() const {
  if (payload.size() > kMaxPayload) throw FramingError("payload too large");
  Bytes out{protocol_id, msg_type};
  put_u32be(out, static_cast<std::uint32_t>(payload.size()));
  append(out, payload);
  return out;
}

WireMessage WireMessage::decode(ByteView frame) {
  if (frame.size() < kHeaderLen) throw FramingError("frame shorter than header");
  std::uint32_t len = get_u32be(frame, 2);
  if (len > kMaxPayload) throw FramingError("declared length too large");
  if (frame.size() != kHeaderLen + len) throw FramingError("length field does not match frame size");
  WireMessage m;
  m.protocol_id = frame[0];
  m.msg_type = frame[1];
  m.payload.assign(frame.begin() + kHeaderLen, frame.end());
  return m;
}

std::string_view to_string(Direction d) {
  return d == Direction::ToResponder ? "to_responder" : "to_initiator";
}

std::string_view to_string(ActionKind k) {
  switch (k) {
    case ActionKind::Observe: return "observe";
    case ActionKind::Drop: return "drop";
    case ActionKind::Delay: return "delay";
    case ActionKind::FlipBit: return "flip_bit";
    case ActionKind::Replace: return "replace";
    case ActionKind::Inject: return "inject";
    case ActionKind::Replay: return "replay";
  }
  return "?";
}

bool AdversaryScript::observe_only() const {
  for (const auto& r : rules)
    if (r.action.kind != ActionKind::Observe) return false;
  return true;
}

namespace {

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

[[noreturn]] void fail(int line, const std::string& msg) {
  throw ScriptError("line " + std::to_string(line) + ": " + msg);
}

std::uint64_t number(std::string_view v, int line) {
  std::uint64_t n = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
  if (ec != std::errc() || p != v.data() + v.size()) fail(line, "expected a number, got '" + std::string(v) + "'");
  return n;
}

Bytes hex(std::string_view v, int line) {
  try {
    return from_hex(v);
  } catch (const std::invalid_argument&) {
    fail(line, "bad hex payload");
  }
}

std::pair<std::string_view, std::string_view> kv(std::string_view tok, char sep) {
  auto p = tok.find(sep);
  if (p == std::string_view::npos) return {tok, {}};
  return {tok.substr(0, p), tok.substr(p + 1)};
}

Action parse_action(std::string_view tok, int line) {
  auto [name, arg] = kv(tok, ':');
  Action a;
  if (name == "observe") {
    a.kind = ActionKind::Observe;
  } else if (name == "drop") {
    a.kind = ActionKind::Drop;
  } else if (name == "delay") {
    a.kind = ActionKind::Delay;
    a.n = number(arg, line);
  } else if (name == "flip_bit") {
    a.kind = ActionKind::FlipBit;
    if (arg == "rand") a.random_bit = true;
    else a.n = number(arg, line);
  } else if (name == "replace") {
    a.kind = ActionKind::Replace;
    a.payload = hex(arg, line);
  } else if (name == "inject") {
    a.kind = ActionKind::Inject;
    a.payload = hex(arg, line);
    try {
      (void)WireMessage::decode(a.payload);
    } catch (const FramingError& e) {
      fail(line, std::string("inject frame: ") + e.what());
    }
  } else if (name == "replay") {
    a.kind = ActionKind::Replay;
    a.n = number(arg, line);
  } else {
    fail(line, "unknown action '" + std::string(name) + "'");
  }
  return a;
}

}  // namespace

AdversaryScript parse_script(std::string_view text) {
  AdversaryScript s;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (auto h = raw.find('#'); h != std::string::npos) raw.resize(h);
    auto toks = split_ws(raw);
    if (toks.empty()) continue;
    if (toks[0] == "seed") {
      if (toks.size() != 2) fail(line, "usage: seed <u64>");
      s.seed = number(toks[1], line);
    } else if (toks[0] == "query") {
      if (toks.size() < 2) fail(line, "query needs a name");
      QueryLine q{toks[1], {}, line};
      for (std::size_t i = 2; i < toks.size(); ++i) {
        auto [k, v] = kv(toks[i], '=');
        if (v.empty()) fail(line, "query argument '" + toks[i] + "' is not key=value");
        q.args.emplace_back(std::string(k), std::string(v));
      }
      s.queries.push_back(std::move(q));
    } else if (toks[0] == "on") {
      Rule r;
      std::size_t i = 1;
      bool any = false;
      for (; i < toks.size() && toks[i] != "do"; ++i) {
        auto [k, v] = kv(toks[i], ':');
        if (k == "any" && v.empty()) any = true;
        else if (k == "msg") r.match.ordinal = number(v, line);
        else if (k == "type") r.match.msg_type = static_cast<std::uint8_t>(number(v, line));
        else if (k == "stage") r.match.stage = static_cast<std::uint32_t>(number(v, line));
        else if (k == "proto") r.match.protocol_id = static_cast<std::uint8_t>(number(v, line));
        else if (k == "dir") {
          if (v == "to_responder") r.match.direction = Direction::ToResponder;
          else if (v == "to_initiator") r.match.direction = Direction::ToInitiator;
          else fail(line, "dir must be to_responder or to_initiator");
        } else {
          fail(line, "unknown matcher '" + toks[i] + "'");
        }
      }
      if (i == 1 && !any) fail(line, "rule needs a matcher (use 'any' to match every message)");
      if (i + 2 != toks.size()) fail(line, "expected exactly one action after 'do'");
      r.action = parse_action(toks[i + 1], line);
      s.rules.push_back(std::move(r));
    } else {
      fail(line, "unknown directive '" + toks[0] + "'");
    }
  }
  return s;
}

}  // namespace qkdauth::transport
