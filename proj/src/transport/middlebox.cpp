#include "qkdauth/errors.hpp"
#include "qkdauth/transport.hpp"

namespace qkdauth::transport {

Middlebox::Middlebox(AdversaryScript script) : script_(std::move(script)), rng_(script_.seed, "middlebox") {}

void Middlebox::record_sent(const WireMessage& m) {
  std::lock_guard lk(mu_);
  log_.push_back(m.encode());
}

void Middlebox::set_stage(std::uint32_t stage) {
  std::lock_guard lk(mu_);
  stage_ = stage;
}

std::vector<Bytes> Middlebox::passive_log() const {
  std::lock_guard lk(mu_);
  return log_;
}

std::vector<AuditEntry> Middlebox::audit() const {
  std::lock_guard lk(mu_);
  return audit_;
}

std::uint64_t Middlebox::dequeued() const {
  std::lock_guard lk(mu_);
  return ordinal_;
}

namespace {
bool matches(const Match& m, std::uint64_t ordinal, std::uint32_t stage, Direction d, const WireMessage& w) {
  if (m.ordinal && *m.ordinal != ordinal) return false;
  if (m.msg_type && *m.msg_type != w.msg_type) return false;
  if (m.stage && *m.stage != stage) return false;
  if (m.direction && *m.direction != d) return false;
  if (m.protocol_id && *m.protocol_id != w.protocol_id) return false;
  return true;
}
}  // namespace

Middlebox::Decision Middlebox::on_dequeue(Direction d, WireMessage m) {
  std::lock_guard lk(mu_);
  const std::uint64_t ordinal = ++ordinal_;
  const std::uint8_t type = m.msg_type;
  Decision out;
  std::vector<WireMessage> before;
  bool keep = true;
  std::optional<std::uint64_t> delay;

  auto note = [&](ActionKind k, std::string detail) {
    audit_.push_back({ordinal, stage_, d, type, k, std::move(detail)});
  };

  for (const auto& rule : script_.rules) {
    if (!keep) break;
    if (!matches(rule.match, ordinal, stage_, d, m)) continue;
    const Action& a = rule.action;
    switch (a.kind) {
      case ActionKind::Observe:
        note(a.kind, std::to_string(m.payload.size()) + " octets");
        break;
      case ActionKind::Drop:
        keep = false;
        note(a.kind, {});
        break;
      case ActionKind::Delay:
        delay = a.n;
        note(a.kind, std::to_string(a.n) + " ticks");
        break;
      case ActionKind::FlipBit: {
        std::uint64_t bits = m.payload.size() * 8;
        if (bits == 0) {
          note(a.kind, "empty payload, unchanged");
          break;
        }
        std::uint64_t pos = a.random_bit ? rng_.next_u64() % bits : a.n;
        if (pos >= bits) {
          note(a.kind, "bit " + std::to_string(pos) + " out of range, unchanged");
          break;
        }
        m.payload[pos / 8] ^= static_cast<std::uint8_t>(0x80u >> (pos % 8));
        m.plaintext_payload.clear();
        note(a.kind, "bit " + std::to_string(pos));
        break;
      }
      case ActionKind::Replace:
        m.payload = a.payload;
        m.plaintext_payload.clear();
        note(a.kind, std::to_string(a.payload.size()) + " octets");
        break;
      case ActionKind::Inject:
        before.push_back(WireMessage::decode(a.payload));
        note(a.kind, std::to_string(a.payload.size()) + " octet frame");
        break;
      case ActionKind::Replay:
        if (a.n >= log_.size()) {
          note(a.kind, "log index " + std::to_string(a.n) + " not yet recorded, unchanged");
          break;
        }
        m = WireMessage::decode(log_[a.n]);
        note(a.kind, "log index " + std::to_string(a.n));
        break;
    }
  }

  out.deliver = std::move(before);
  if (keep) {
    if (delay && *delay > 0) out.hold = std::make_pair(*delay, std::move(m));
    else out.deliver.push_back(std::move(m));
  }
  return out;
}

void Inbox::push(WireMessage m) {
  std::lock_guard lk(mu_);
  queue_.push_back(std::move(m));
}

std::optional<WireMessage> Inbox::try_pop() {
  std::lock_guard lk(mu_);
  for (auto it = held_.begin(); it != held_.end();) {
    if (--it->first == 0) {
      ready_.push_back(std::move(it->second));
      it = held_.erase(it);
    } else {
      ++it;
    }
  }
  while (ready_.empty() && !queue_.empty()) {
    WireMessage m = std::move(queue_.front());
    queue_.pop_front();
    auto d = mb_->on_dequeue(dir_, std::move(m));
    for (auto& w : d.deliver) ready_.push_back(std::move(w));
    if (d.hold) held_.push_back(std::move(*d.hold));
  }
  if (ready_.empty()) return std::nullopt;
  WireMessage out = std::move(ready_.front());
  ready_.pop_front();
  return out;
}

bool Inbox::idle() const {
  std::lock_guard lk(mu_);
  return queue_.empty() && ready_.empty() && held_.empty();
}

bool Inbox::has_held() const {
  std::lock_guard lk(mu_);
  return !held_.empty();
}

}  // namespace qkdauth::transport
