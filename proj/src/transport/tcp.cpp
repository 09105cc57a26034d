#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "qkdauth/errors.hpp"
#include "qkdauth/transport.hpp"

namespace qkdauth::transport {

namespace {

[[noreturn]] void sys_fail(const std::string& what) {
  throw ChannelClosed(what + ": " + std::strerror(errno));
}

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(port);
  if (inet_pton(AF_INET, host == "localhost" ? "127.0.0.1" : host.c_str(), &sa.sin_addr) != 1)
    throw ConfigError("unsupported TCP host '" + host + "' (IPv4 literal expected)");
  return sa;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

}  // namespace

std::pair<std::string, std::uint16_t> parse_address(std::string_view addr) {
  auto colon = addr.rfind(':');
  if (colon == std::string_view::npos) throw ConfigError("address must be host:port");
  std::string host(addr.substr(0, colon));
  std::string port(addr.substr(colon + 1));
  unsigned long p = 0;
  try {
    std::size_t used = 0;
    p = std::stoul(port, &used);
    if (used != port.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ConfigError("bad port in '" + std::string(addr) + "'");
  }
  if (p > 65535 || host.empty()) throw ConfigError("bad address '" + std::string(addr) + "'");
  return {host, static_cast<std::uint16_t>(p)};
}

TcpEndpoint::TcpEndpoint(int fd, std::shared_ptr<Middlebox> mb, Direction inbound)
    : fd_(fd), mb_(mb ? std::move(mb) : std::make_shared<Middlebox>()), inbox_(mb_, inbound) {
  set_nodelay(fd_);
}

TcpEndpoint::~TcpEndpoint() { close(); }

void TcpEndpoint::send(const WireMessage& m) {
  if (closed_) throw ChannelClosed("send on closed endpoint");
  Bytes frame = m.encode();
  mb_->record_sent(m);
  std::size_t off = 0;
  while (off < frame.size()) {
    ssize_t n = ::send(fd_, frame.data() + off, frame.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EPIPE || errno == ECONNRESET) return;  // the peer has gone away
      sys_fail("send");
    }
    off += static_cast<std::size_t>(n);
  }
}

void TcpEndpoint::pump(int timeout_ms) {
  if (eof_ || closed_) return;
  pollfd p{fd_, POLLIN, 0};
  int r = ::poll(&p, 1, timeout_ms);
  if (r <= 0) return;
  std::uint8_t buf[65536];
  ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
  if (n <= 0) {
    if (n < 0 && errno == EINTR) return;
    eof_ = true;
    return;
  }
  buffer_.insert(buffer_.end(), buf, buf + n);
  while (buffer_.size() >= WireMessage::kHeaderLen) {
    std::uint32_t len = get_u32be(buffer_, 2);
    if (len > WireMessage::kMaxPayload) throw FramingError("declared length too large");
    std::size_t total = WireMessage::kHeaderLen + len;
    if (buffer_.size() < total) break;
    inbox_.push(WireMessage::decode(ByteView(buffer_.data(), total)));
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(total));
  }
}

std::optional<WireMessage> TcpEndpoint::try_recv() {
  pump(0);
  if (auto m = inbox_.try_pop()) return m;
  if (eof_ && inbox_.idle()) throw ChannelClosed("peer closed the connection");
  return std::nullopt;
}

WireMessage TcpEndpoint::recv() {
  for (;;) {
    if (auto m = try_recv()) return *m;
    pump(5);
  }
}

void TcpEndpoint::close() {
  if (closed_) return;
  closed_ = true;
  ::shutdown(fd_, SHUT_RDWR);
  ::close(fd_);
}

bool TcpEndpoint::peer_closed() const { return eof_; }

TcpListener::TcpListener(const std::string& host, std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) sys_fail("socket");
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in sa = resolve(host, port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0 || ::listen(fd_, 4) != 0) {
    ::close(fd_);
    sys_fail("bind/listen");
  }
  socklen_t len = sizeof sa;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&sa), &len);
  port_ = ntohs(sa.sin_port);
}

TcpListener::~TcpListener() { ::close(fd_); }

std::unique_ptr<TcpEndpoint> TcpListener::accept(std::shared_ptr<Middlebox> mb) {
  int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) sys_fail("accept");
  return std::make_unique<TcpEndpoint>(fd, std::move(mb), Direction::ToResponder);
}

std::unique_ptr<TcpEndpoint> tcp_connect(const std::string& host, std::uint16_t port, std::shared_ptr<Middlebox> mb) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) sys_fail("socket");
  sockaddr_in sa = resolve(host, port);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0) {
    ::close(fd);
    sys_fail("connect");
  }
  return std::make_unique<TcpEndpoint>(fd, std::move(mb), Direction::ToInitiator);
}

}  // namespace qkdauth::transport
