#include <thread>

#include "doctest.h"
#include "harness.hpp"
#include "qkdauth/errors.hpp"
#include "qkdauth/sessions.hpp"
#include "qkdauth/transport.hpp"

using namespace qkdauth;
using namespace qkdauth::transport;

namespace {

WireMessage msg(std::uint8_t type, Bytes payload) {
  WireMessage m;
  m.protocol_id = 1;
  m.msg_type = type;
  m.payload = std::move(payload);
  return m;
}

std::shared_ptr<Middlebox> box(std::string_view script) { return std::make_shared<Middlebox>(parse_script(script)); }

}  // namespace

TEST_SUITE("transport") {

TEST_CASE("wire framing is bit exact") {
  WireMessage m = msg(3, {0xde, 0xad});
  CHECK(m.encode() == from_hex("010300000002dead"));
  WireMessage back = WireMessage::decode(m.encode());
  CHECK(back.protocol_id == 1);
  CHECK(back.msg_type == 3);
  CHECK(back.payload == m.payload);
  CHECK_THROWS_AS(WireMessage::decode(from_hex("0103000000")), FramingError);
  CHECK_THROWS_AS(WireMessage::decode(from_hex("010300000003dead")), FramingError);
  CHECK_THROWS_AS(WireMessage::decode(from_hex("010300000001dead")), FramingError);
}

TEST_CASE("plain channel delivers in order") {
  MemoryChannel ch;
  ch.initiator().send(msg(1, {1}));
  ch.initiator().send(msg(2, {2}));
  CHECK(ch.responder().recv().payload == Bytes{1});
  CHECK(ch.responder().recv().payload == Bytes{2});
  CHECK_FALSE(ch.responder().try_recv());
  ch.responder().send(msg(3, {3, 3}));
  CHECK(ch.initiator().recv().payload == Bytes{3, 3});
}

TEST_CASE("closing the peer surfaces as ChannelClosed") {
  MemoryChannel ch;
  ch.initiator().send(msg(1, {9}));
  ch.initiator().close();
  CHECK(ch.responder().recv().payload == Bytes{9});
  CHECK_THROWS_AS(ch.responder().recv(), ChannelClosed);
  CHECK(ch.responder().peer_closed());
  ch.reset();
  ch.initiator().send(msg(1, {8}));
  CHECK(ch.responder().recv().payload == Bytes{8});
}

TEST_CASE("flip_bit changes exactly the named bit") {
  MemoryChannel ch(box("on msg:3 do flip_bit:10\n"));
  Bytes p(8, 0x55);
  for (std::uint8_t t = 1; t <= 4; ++t) ch.initiator().send(msg(t, p));
  for (int i = 1; i <= 4; ++i) {
    Bytes got = ch.responder().recv().payload;
    if (i != 3) {
      CHECK(got == p);
      continue;
    }
    Bytes diff(8);
    for (std::size_t k = 0; k < 8; ++k) diff[k] = got[k] ^ p[k];
    CHECK(diff == Bytes{0, 0x20, 0, 0, 0, 0, 0, 0});
  }
  auto audit = ch.middlebox().audit();
  REQUIRE(audit.size() == 1);
  CHECK(audit[0].action == ActionKind::FlipBit);
  CHECK(audit[0].ordinal == 3);
}

TEST_CASE("replay re-emits a logged frame verbatim") {
  MemoryChannel ch(box("on msg:3 do replay:0\n"));
  ch.initiator().send(msg(1, {1, 1}));
  ch.initiator().send(msg(2, {2, 2}));
  ch.initiator().send(msg(3, {3, 3}));
  ch.responder().recv();
  ch.responder().recv();
  WireMessage r = ch.responder().recv();
  CHECK(r.encode() == ch.passive_log()[0]);
}

TEST_CASE("drop, delay, replace and inject") {
  WireMessage extra = msg(7, {7});
  MemoryChannel ch(box("on msg:1 do drop\non msg:2 do delay:2\non msg:3 do replace:abcd\non msg:4 do inject:" +
                       to_hex(extra.encode()) + "\n"));
  for (std::uint8_t t = 1; t <= 4; ++t) ch.initiator().send(msg(t, {t}));
  std::vector<WireMessage> got;
  for (int tries = 0; tries < 20 && got.size() < 4; ++tries)
    if (auto m = ch.responder().try_recv()) got.push_back(*m);
  REQUIRE(got.size() == 4);
  CHECK(got[0].msg_type == 3);
  CHECK(got[0].payload == from_hex("abcd"));
  CHECK(got[1].msg_type == 7);
  CHECK(got[2].msg_type == 4);
  CHECK(got[3].msg_type == 2);
  CHECK(ch.middlebox().audit().size() == 4);
}

TEST_CASE("passive log holds every frame as sent") {
  MemoryChannel ch(box("on any do flip_bit:0\n"));
  std::vector<Bytes> sent;
  for (std::uint8_t t = 1; t <= 5; ++t) {
    WireMessage m = msg(t, Bytes(4, t));
    sent.push_back(m.encode());
    (t % 2 ? ch.initiator() : ch.responder()).send(m);
  }
  CHECK(ch.passive_log() == sent);
}

TEST_CASE("observe-only scripts leave outcomes unchanged") {
  for (auto p : {sessions::ProtocolId::Sigma, sessions::ProtocolId::Kem}) {
    auto plain = harness::config({p}, 50);
    auto watched = plain;
    watched.adversary = parse_script("on any do observe\n");
    CHECK(watched.adversary.observe_only());
    auto a = sessions::run_multistage(plain);
    auto b = sessions::run_multistage(watched);
    CHECK(a.all_accept);
    CHECK(b.all_accept);
    CHECK(a.stages[0].ss_rest_fp == b.stages[0].ss_rest_fp);
    CHECK(a.stages[0].sec_state_fp_a == b.stages[0].sec_state_fp_a);
    CHECK(a.passive_log == b.passive_log);
    CHECK(b.audit.size() == 8);
  }
}

TEST_CASE("script parsing") {
  auto s = parse_script("# comment\nseed 17\non msg:2 type:4 stage:3 dir:to_initiator proto:2 do flip_bit:rand\n"
                        "query Reveal i=0 s=0 t=1\n");
  CHECK(s.seed == 17);
  REQUIRE(s.rules.size() == 1);
  CHECK(s.rules[0].match.ordinal == 2u);
  CHECK(s.rules[0].match.msg_type == 4);
  CHECK(s.rules[0].match.stage == 3u);
  CHECK(s.rules[0].match.direction == Direction::ToInitiator);
  CHECK(s.rules[0].action.random_bit);
  REQUIRE(s.queries.size() == 1);
  CHECK(s.queries[0].name == "Reveal");
  CHECK_FALSE(s.observe_only());
  CHECK_THROWS_AS(parse_script("on msg:1 do explode\n"), ScriptError);
  CHECK_THROWS_AS(parse_script("on msg:x do drop\n"), ScriptError);
  CHECK_THROWS_AS(parse_script("gibberish\n"), ScriptError);
  CHECK_THROWS_AS(parse_script("on msg:1 do replace:zz\n"), ScriptError);
}

TEST_CASE("tcp endpoints use the same framing") {
  auto mb = std::make_shared<Middlebox>();
  TcpListener listener("127.0.0.1", 0);
  CHECK(listener.port() != 0);
  Bytes received;
  std::thread server([&] {
    auto ep = listener.accept(mb);
    WireMessage m = ep->recv();
    received = m.encode();
    ep->send(msg(2, {4, 5, 6}));
    ep->close();
  });
  auto client = tcp_connect("127.0.0.1", listener.port(), mb);
  WireMessage out = msg(1, Bytes(1000, 0x42));
  client->send(out);
  WireMessage back = client->recv();
  server.join();
  CHECK(received == out.encode());
  CHECK(back.payload == Bytes{4, 5, 6});
  CHECK_THROWS_AS(client->recv(), ChannelClosed);
  CHECK(parse_address("127.0.0.1:8080") == std::pair<std::string, std::uint16_t>{"127.0.0.1", 8080});
}

TEST_CASE("tcp and memory runs agree") {
  auto mem = harness::config({sessions::ProtocolId::Kem, sessions::ProtocolId::Mac}, 51);
  auto tcp = mem;
  tcp.transport = "tcp:127.0.0.1:0";
  auto a = sessions::run_multistage(mem);
  auto b = sessions::run_multistage(tcp);
  REQUIRE(a.stages.size() == b.stages.size());
  for (std::size_t i = 0; i < a.stages.size(); ++i) {
    CHECK(a.stages[i].ss_rest_fp == b.stages[i].ss_rest_fp);
    CHECK(a.stages[i].pool_fp_a == b.stages[i].pool_fp_a);
    CHECK(a.stages[i].sec_state_fp_b == b.stages[i].sec_state_fp_b);
  }
  CHECK(a.passive_log == b.passive_log);
}

}  // TEST_SUITE
