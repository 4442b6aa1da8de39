#include "dmh/wire.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace dmh {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 24));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

bool WireMessage::operator==(const WireMessage& other) const {
  if (type != other.type || client_id != other.client_id || step != other.step ||
      payload.size() != other.payload.size()) {
    return false;
  }
  for (std::size_t i = 0; i < payload.size(); ++i) {
    // bit comparison: NaN payloads still round-trip
    if (std::bit_cast<std::uint64_t>(payload[i]) != std::bit_cast<std::uint64_t>(other.payload[i]))
      return false;
  }
  return true;
}

std::size_t encoded_size(const WireMessage& msg) {
  return kWireHeaderBytes + 8 * msg.payload.size();
}

std::vector<std::uint8_t> encode_message(const WireMessage& msg) {
  std::vector<std::uint8_t> out;
  out.reserve(encoded_size(msg));
  out.push_back('D');
  out.push_back('M');
  out.push_back(kWireVersion);
  out.push_back(static_cast<std::uint8_t>(msg.type));
  put_u32(out, msg.client_id);
  put_u64(out, msg.step);
  put_u32(out, static_cast<std::uint32_t>(8 * msg.payload.size()));
  for (double v : msg.payload) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

WireHeader decode_header(const std::uint8_t* data, std::size_t len) {
  if (len < kWireHeaderBytes) {
    throw TruncationError("wire header needs 20 bytes, got " + std::to_string(len));
  }
  if (data[0] != 'D' || data[1] != 'M') throw BadMagicError("wire frame lacks the DM magic");
  WireHeader h;
  h.version = data[2];
  if (h.version != kWireVersion) {
    throw VersionError("wire version " + std::to_string(h.version) + ", expected " +
                       std::to_string(kWireVersion));
  }
  if (data[3] > static_cast<std::uint8_t>(MsgType::Close)) {
    throw UnknownTypeError("unknown wire message type " + std::to_string(data[3]));
  }
  h.type = static_cast<MsgType>(data[3]);
  h.client_id = get_u32(data + 4);
  h.step = get_u64(data + 8);
  h.payload_len = get_u32(data + 16);
  if (h.payload_len % 8 != 0) {
    throw BadLengthError("payload length " + std::to_string(h.payload_len) +
                         " is not a whole number of 64-bit floats");
  }
  return h;
}

WireMessage decode_message(const std::uint8_t* data, std::size_t len) {
  WireHeader h = decode_header(data, len);
  if (len < kWireHeaderBytes + h.payload_len) {
    throw TruncationError("frame claims " + std::to_string(h.payload_len) +
                          " payload bytes but only " + std::to_string(len - kWireHeaderBytes) +
                          " are present");
  }
  if (len > kWireHeaderBytes + h.payload_len) {
    throw BadLengthError(std::to_string(len - kWireHeaderBytes - h.payload_len) +
                         " trailing bytes after the frame");
  }
  WireMessage msg;
  msg.type = h.type;
  msg.client_id = h.client_id;
  msg.step = h.step;
  msg.payload.resize(h.payload_len / 8);
  for (std::size_t i = 0; i < msg.payload.size(); ++i) {
    msg.payload[i] = std::bit_cast<double>(get_u64(data + kWireHeaderBytes + 8 * i));
  }
  return msg;
}

WireMessage decode_message(const std::vector<std::uint8_t>& buffer) {
  return decode_message(buffer.data(), buffer.size());
}

void TransmissionLedger::record_to_server(const WireMessage& msg) {
  std::lock_guard<std::mutex> lock(mu_);
  t_.to_server_messages += 1;
  t_.to_server_bytes += encoded_size(msg);
  t_.to_server_floats += msg.payload.size();
}

void TransmissionLedger::record_to_client(const WireMessage& msg) {
  std::lock_guard<std::mutex> lock(mu_);
  t_.to_client_messages += 1;
  t_.to_client_bytes += encoded_size(msg);
  t_.to_client_floats += msg.payload.size();
}

void TransmissionLedger::record_forward(std::uint64_t activations, std::uint64_t labels,
                                        std::uint64_t samples, std::uint32_t payload_bytes) {
  std::lock_guard<std::mutex> lock(mu_);
  t_.activation_floats += activations;
  t_.label_floats += labels;
  t_.samples += samples;
  t_.steps += 1;
  t_.step_payload_bytes.push_back(payload_bytes);
}

LedgerTotals TransmissionLedger::snapshot() const {
  std::lock_guard<std::mutex> lock(mu_);
  return t_;
}

double transmission_ratio(const LedgerTotals& totals, std::size_t M, std::size_t W) {
  if (totals.samples == 0) throw ConfigError("transmission_ratio: no completed steps");
  if (M == 0 || W == 0) throw ConfigError("transmission_ratio: M and W must be positive");
  return static_cast<double>(totals.activation_floats) /
         (static_cast<double>(totals.samples) * static_cast<double>(M) *
          static_cast<double>(W));
}

void write_ledger(const std::string& path, const LedgerTotals& totals, std::size_t M,
                  std::size_t W) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write ledger " + path);
  out << "direction,messages,bytes,floats\n";
  out << "to_server," << totals.to_server_messages << "," << totals.to_server_bytes << ","
      << totals.to_server_floats << "\n";
  out << "to_client," << totals.to_client_messages << "," << totals.to_client_bytes << ","
      << totals.to_client_floats << "\n";
  out << "activation_floats," << totals.activation_floats << "\n";
  out << "label_floats," << totals.label_floats << "\n";
  out << "samples," << totals.samples << "\n";
  out << "steps," << totals.steps << "\n";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", transmission_ratio(totals, M, W));
  out << "transmission_ratio," << buf << "\n";
}

}  // namespace dmh
