#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args, const std::string& env = "") {
  std::string cmd = env + QKDAUTH_CLI_PATH + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string fixture(const std::string& name) { return std::string(QKDAUTH_FIXTURES_DIR) + "/" + name; }

std::map<std::string, std::string> kv(const std::string& text, bool skip_timing = false) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    if (skip_timing && key.rfind("timing.", 0) == 0) continue;
    out[key] = line.substr(eq + 1);
  }
  return out;
}

}  // namespace

TEST_CASE("honest handshake exits 0 and fills the pool") {
  auto r = cli("handshake --plan kem,mac --seed 5 --format kv");
  CHECK(r.code == 0);
  auto m = kv(r.out);
  CHECK(m["result"] == "accept");
  CHECK(m["stage.2.agree"] == "1");
  CHECK(std::stoul(m["stage.2.pool_a"]) > 0);
  CHECK(m["stage.2.pool_fp_a"] == m["stage.2.pool_fp_b"]);
  CHECK(m["timing.stage.1.t_a"].size() > 0);
}

TEST_CASE("tampered MAC stage exits 2 with the MAC reason") {
  auto r = cli("handshake --plan kem,mac --seed 5 --format kv --adversary " + fixture("flip.txt"));
  CHECK(r.code == 2);
  auto m = kv(r.out);
  CHECK(m["result"] == "reject");
  CHECK(m["reason"] == "mac_verify_failed");
  CHECK(m["stage.2.step"] == "10");
}

TEST_CASE("TCP and memory transports print the same report") {
  auto mem = cli("handshake --plan kem,mac --seed 9 --format kv");
  auto tcp = cli("handshake --plan kem,mac --seed 9 --format kv --transport tcp:127.0.0.1:0");
  CHECK(mem.code == 0);
  CHECK(tcp.code == 0);
  CHECK(kv(mem.out, true) == kv(tcp.out, true));
}

TEST_CASE("seed from the environment overrides the flag") {
  auto a = cli("handshake --plan sigma --seed 1 --format kv");
  auto b = cli("handshake --plan sigma --seed 2 --format kv");
  auto c = cli("handshake --plan sigma --seed 2 --format kv");
  auto d = cli("handshake --plan sigma --seed 2 --format kv", "QKD_AUTH_SEED=1 ");
  CHECK(kv(a.out, true) != kv(b.out, true));
  CHECK(kv(b.out, true) == kv(c.out, true));
  CHECK(kv(d.out, true) == kv(a.out, true));
}

TEST_CASE("usage errors exit 3") {
  CHECK(cli("handshake --plan '' --format kv").code == 3);
  CHECK(cli("handshake --plan mac").code == 3);
  CHECK(cli("handshake --plan kem --adversary " + fixture("bad_script.txt")).code == 3);
  CHECK(cli("handshake").code == 3);
  CHECK(cli("frobnicate").code == 3);
  CHECK(cli("budget --plan kem --stage 4").code == 3);
}

TEST_CASE("budget prints the stage table") {
  auto r = cli("budget --plan kem --format kv");
  CHECK(r.code == 0);
  auto m = kv(r.out);
  CHECK(m["stage.1.expr"] == "8[KEM + eps + 2dual + 22PRF + 5CPA + 5CTXT + 3MAC + 15H] + 4[eps + 4CPA]");

  auto f = cli("budget --plan " + fixture("plan_kem_mac.toml") + " --params " + fixture("params.toml") +
               " --format kv --stage 2");
  CHECK(f.code == 0);
  auto g = kv(f.out);
  CHECK(g.count("stage.1.expr") == 0);
  CHECK(g["stage.2.protocol"] == "mac");
  CHECK(std::stod(g["stage.2.r"]) > 0);
  CHECK(std::stod(g["stage.2.value"]) > std::stod(g["stage.2.r"]));
}

TEST_CASE("passive experiment guesses at chance") {
  auto r = cli("experiment --plan kem --trials 1000 --seed 3 --format kv");
  CHECK(r.code == 0);
  auto m = kv(r.out);
  double rate = std::stod(m["guess_rate"]);
  CHECK(rate >= 0.45);
  CHECK(rate <= 0.55);
  CHECK(m["clean"] == "1000");
  CHECK(m["trivial_win"] == "0");
}

TEST_CASE("Reveal then Test through the CLI") {
  auto r = cli("experiment --plan kem --trials 20 --seed 4 --format kv --adversary " + fixture("reveal_test.txt"));
  CHECK(r.code == 0);
  auto m = kv(r.out);
  CHECK(m["trivial_win"] == "20");
  CHECK(m["clean"] == "0");
  CHECK(m["wins"] == "0");
}
