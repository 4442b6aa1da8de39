#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cstdio>
#include <fstream>

#include "dmh/rng.hpp"
#include "dmh/wire.hpp"

using namespace dmh;

namespace {

WireMessage random_message(Rng& rng) {
  WireMessage m;
  m.type = static_cast<MsgType>(rng.next_below(5));
  m.client_id = static_cast<std::uint32_t>(rng.next_u64());
  m.step = rng.next_u64();
  const std::size_t n = rng.next_below(17);
  for (std::size_t i = 0; i < n; ++i) {
    m.payload.push_back(std::bit_cast<double>(rng.next_u64()));  // any bits, NaNs welcome
  }
  return m;
}

}  // namespace

TEST_CASE("forward frame with three floats is 44 bytes") {
  WireMessage m;
  m.type = MsgType::Forward;
  m.client_id = 7;
  m.step = 12;
  m.payload = {1.0, 2.0, 3.0};
  auto bytes = encode_message(m);
  CHECK(bytes.size() == 44);
  CHECK(encoded_size(m) == 44);
  CHECK(kWireHeaderBytes == 20);
}

TEST_CASE("header fields land at the documented offsets") {
  WireMessage m;
  m.type = MsgType::Grad;
  m.client_id = 0x04030201u;
  m.step = 0x0807060504030201ull;
  m.payload = {-1.5};
  auto b = encode_message(m);
  CHECK(b[0] == 'D');
  CHECK(b[1] == 'M');
  CHECK(b[2] == kWireVersion);
  CHECK(b[3] == 2);  // Grad
  CHECK(b[4] == 0x01);
  CHECK(b[7] == 0x04);  // client_id little-endian
  CHECK(b[8] == 0x01);
  CHECK(b[15] == 0x08);  // step little-endian
  CHECK(b[16] == 8);
  CHECK(b[17] == 0);  // payload_len = 8

  WireHeader h = decode_header(b.data(), b.size());
  CHECK(h.type == MsgType::Grad);
  CHECK(h.client_id == 0x04030201u);
  CHECK(h.step == 0x0807060504030201ull);
  CHECK(h.payload_len == 8);
}

TEST_CASE("a thousand random frames round-trip bit-exactly") {
  Rng rng(2024);
  for (int i = 0; i < 1000; ++i) {
    WireMessage m = random_message(rng);
    WireMessage back = decode_message(encode_message(m));
    CHECK(back == m);
  }
}

TEST_CASE("decode failures are told apart") {
  WireMessage m;
  m.type = MsgType::Metric;
  m.payload = {0.25, 0.75};
  auto good = encode_message(m);

  SUBCASE("short buffer") {
    CHECK_THROWS_AS(decode_message(good.data(), 19), TruncationError);
    CHECK_THROWS_AS(decode_message(good.data(), good.size() - 1), TruncationError);
  }
  SUBCASE("bad magic") {
    auto bad = good;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_message(bad), BadMagicError);
    bad = good;
    bad[1] = 'm';
    CHECK_THROWS_AS(decode_message(bad), BadMagicError);
  }
  SUBCASE("version mismatch") {
    auto bad = good;
    bad[2] = kWireVersion + 1;
    CHECK_THROWS_AS(decode_message(bad), VersionError);
  }
  SUBCASE("unknown type") {
    auto bad = good;
    bad[3] = 9;
    CHECK_THROWS_AS(decode_message(bad), UnknownTypeError);
  }
  SUBCASE("ragged payload length") {
    auto bad = good;
    bad[16] = 7;  // not a multiple of 8
    CHECK_THROWS_AS(decode_message(bad), BadLengthError);
  }
  SUBCASE("trailing bytes") {
    auto bad = good;
    bad.push_back(0);
    CHECK_THROWS_AS(decode_message(bad), BadLengthError);
  }
  SUBCASE("all are WireError") {
    auto bad = good;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_message(bad), WireError);
  }
}

TEST_CASE("ten thousand fuzzed buffers never crash the decoder") {
  Rng rng(77);
  std::size_t decoded = 0, rejected = 0;
  for (int i = 0; i < 10000; ++i) {
    std::vector<std::uint8_t> buf(rng.next_below(96));
    for (auto& b : buf) b = static_cast<std::uint8_t>(rng.next_below(256));
    if (rng.next_below(3) == 0 && buf.size() >= 4) {
      buf[0] = 'D';  // steer a third of the corpus past the magic check
      buf[1] = 'M';
      buf[2] = kWireVersion;
      buf[3] = static_cast<std::uint8_t>(rng.next_below(5));
    }
    try {
      decode_message(buf);
      ++decoded;
    } catch (const WireError&) {
      ++rejected;
    }
  }
  CHECK(decoded + rejected == 10000);
  CHECK(rejected > 0);
}

TEST_CASE("ledger totals follow the 20 plus 8n byte rule") {
  TransmissionLedger ledger;
  WireMessage fwd;
  fwd.type = MsgType::Forward;
  fwd.payload.assign(16, 0.5);  // e.g. one sample: 15 activations + 1 label
  ledger.record_to_server(fwd);
  ledger.record_forward(15, 1, 1, static_cast<std::uint32_t>(8 * fwd.payload.size()));

  WireMessage grad;
  grad.type = MsgType::Grad;
  grad.payload.assign(15, 0.0);
  ledger.record_to_client(grad);

  WireMessage metric;
  metric.type = MsgType::Metric;
  metric.payload = {0.125};
  ledger.record_to_client(metric);

  LedgerTotals t = ledger.snapshot();
  CHECK(t.to_server_messages == 1);
  CHECK(t.to_server_bytes == 20 + 8 * 16);
  CHECK(t.to_server_floats == 16);
  CHECK(t.to_client_messages == 2);
  CHECK(t.to_client_bytes == (20 + 8 * 15) + (20 + 8 * 1));
  CHECK(t.to_client_floats == 16);
  CHECK(t.activation_floats == 15);
  CHECK(t.label_floats == 1);
  CHECK(t.samples == 1);
  CHECK(t.steps == 1);
  REQUIRE(t.step_payload_bytes.size() == 1);
  CHECK(t.step_payload_bytes[0] == 128);
}

TEST_CASE("transmission ratio hits the closed forms exactly") {
  // next-step mode sends M activations per sample: M/(M*W) = 1/W
  LedgerTotals t_mode;
  t_mode.activation_floats = 15 * 190;
  t_mode.samples = 190;
  CHECK(transmission_ratio(t_mode, 15, 5) == 0.2);

  // preliminary-power mode sends H activations per sample: H/(M*W)
  LedgerTotals e_mode;
  e_mode.activation_floats = 3 * 190;
  e_mode.samples = 190;
  CHECK(transmission_ratio(e_mode, 15, 5) == 0.04);

  // no window, no saving
  LedgerTotals w1;
  w1.activation_floats = 15 * 7;
  w1.samples = 7;
  CHECK(transmission_ratio(w1, 15, 1) == 1.0);

  LedgerTotals empty;
  CHECK_THROWS_AS(transmission_ratio(empty, 15, 5), ConfigError);
}

TEST_CASE("ledger file lists both directions and the ratio") {
  TransmissionLedger ledger;
  WireMessage fwd;
  fwd.type = MsgType::Forward;
  fwd.payload.assign(4, 1.0);
  ledger.record_to_server(fwd);
  ledger.record_forward(3, 1, 1, 32);

  const std::string path = "wire_ledger.csv";
  write_ledger(path, ledger.snapshot(), 15, 5);
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  std::remove(path.c_str());

  CHECK(text.find("to_server,1,52,4") != std::string::npos);
  CHECK(text.find("transmission_ratio,0.040000") != std::string::npos);
}
