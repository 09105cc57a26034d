#include <chrono>

#include "qkdauth/errors.hpp"
#include "qkdauth/transport.hpp"

namespace qkdauth::transport {

struct MemoryChannel::Shared {
  explicit Shared(const std::shared_ptr<Middlebox>& mb)
      : to_responder(mb, Direction::ToResponder), to_initiator(mb, Direction::ToInitiator) {}
  std::mutex mu;
  std::condition_variable cv;
  Inbox to_responder;
  Inbox to_initiator;
  bool initiator_closed = false;
  bool responder_closed = false;
};

class MemoryChannel::End final : public Endpoint {
 public:
  End(std::shared_ptr<Middlebox> mb, std::shared_ptr<Shared> s, bool is_initiator)
      : mb_(std::move(mb)), s_(std::move(s)), initiator_(is_initiator) {}

  void send(const WireMessage& m) override {
    {
      std::lock_guard lk(s_->mu);
      if (self_closed()) throw ChannelClosed("send on closed endpoint");
      if (peer_closed_locked()) return;  // the peer has gone away; the frame is lost
    }
    WireMessage copy = m;
    mb_->record_sent(copy);
    outbox().push(std::move(copy));
    s_->cv.notify_all();
  }

  std::optional<WireMessage> try_recv() override {
    auto m = inbox().try_pop();
    if (m) return m;
    std::lock_guard lk(s_->mu);
    if (peer_closed_locked() && inbox().idle()) throw ChannelClosed("peer closed the channel");
    return std::nullopt;
  }

  WireMessage recv() override {
    for (;;) {
      if (auto m = try_recv()) return *m;
      std::unique_lock lk(s_->mu);
      s_->cv.wait_for(lk, std::chrono::milliseconds(5));
    }
  }

  void close() override {
    {
      std::lock_guard lk(s_->mu);
      (initiator_ ? s_->initiator_closed : s_->responder_closed) = true;
    }
    s_->cv.notify_all();
  }

  bool peer_closed() const override {
    std::lock_guard lk(s_->mu);
    return peer_closed_locked();
  }

 private:
  bool self_closed() const { return initiator_ ? s_->initiator_closed : s_->responder_closed; }
  bool peer_closed_locked() const { return initiator_ ? s_->responder_closed : s_->initiator_closed; }
  Inbox& inbox() { return initiator_ ? s_->to_initiator : s_->to_responder; }
  Inbox& outbox() { return initiator_ ? s_->to_responder : s_->to_initiator; }

  std::shared_ptr<Middlebox> mb_;
  std::shared_ptr<Shared> s_;
  bool initiator_;
};

MemoryChannel::MemoryChannel(std::shared_ptr<Middlebox> mb)
    : mb_(mb ? std::move(mb) : std::make_shared<Middlebox>()) {
  reset();
}

MemoryChannel::~MemoryChannel() = default;

void MemoryChannel::reset() {
  shared_ = std::make_shared<Shared>(mb_);
  init_ = std::make_unique<End>(mb_, shared_, true);
  resp_ = std::make_unique<End>(mb_, shared_, false);
}

Endpoint& MemoryChannel::initiator() { return *init_; }
Endpoint& MemoryChannel::responder() { return *resp_; }

bool MemoryChannel::has_held() const {
  return shared_->to_initiator.has_held() || shared_->to_responder.has_held();
}

}  // namespace qkdauth::transport
