#pragma once

#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "dmh/tensor.hpp"

namespace dmh {

struct WireError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BadMagicError : WireError {
  using WireError::WireError;
};
struct TruncationError : WireError {
  using WireError::WireError;
};
struct VersionError : WireError {
  using WireError::WireError;
};
struct UnknownTypeError : WireError {
  using WireError::WireError;
};
struct BadLengthError : WireError {
  using WireError::WireError;
};

enum class MsgType : std::uint8_t { Init = 0, Forward = 1, Grad = 2, Metric = 3, Close = 4 };

inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kWireHeaderBytes = 20;

/// Frame: "DM" | version u8 | msg_type u8 | client_id u32 | step u64 |
/// payload_len u32 | payload. All integers little-endian; payload is raw
/// little-endian 64-bit floats, so values cross the wire bit-exactly.
struct WireMessage {
  MsgType type = MsgType::Init;
  std::uint32_t client_id = 0;
  std::uint64_t step = 0;
  std::vector<double> payload;

  bool operator==(const WireMessage& other) const;
};

std::vector<std::uint8_t> encode_message(const WireMessage& msg);

/// The buffer must hold exactly one frame. Distinct failures: BadMagicError,
/// VersionError, UnknownTypeError, BadLengthError (length field inconsistent),
/// TruncationError (buffer shorter than the frame claims).
WireMessage decode_message(const std::uint8_t* data, std::size_t len);
WireMessage decode_message(const std::vector<std::uint8_t>& buffer);

/// Header-only view used by stream transports to size the payload read.
struct WireHeader {
  std::uint8_t version = 0;
  MsgType type = MsgType::Init;
  std::uint32_t client_id = 0;
  std::uint64_t step = 0;
  std::uint32_t payload_len = 0;
};
WireHeader decode_header(const std::uint8_t* data, std::size_t len);

std::size_t encoded_size(const WireMessage& msg);

/// Byte-exact traffic accounting for one client/server session.
struct LedgerTotals {
  std::uint64_t to_server_messages = 0;
  std::uint64_t to_server_bytes = 0;
  std::uint64_t to_server_floats = 0;
  std::uint64_t to_client_messages = 0;
  std::uint64_t to_client_bytes = 0;
  std::uint64_t to_client_floats = 0;
  std::uint64_t activation_floats = 0;  // Forward payload floats, labels excluded
  std::uint64_t label_floats = 0;
  std::uint64_t samples = 0;  // windowed samples carried by Forward messages
  std::uint64_t steps = 0;    // Forward messages sent
  std::vector<std::uint32_t> step_payload_bytes;
};

class TransmissionLedger {
 public:
  void record_to_server(const WireMessage& msg);
  void record_to_client(const WireMessage& msg);
  /// Forward-specific breakdown recorded alongside record_to_server.
  void record_forward(std::uint64_t activations, std::uint64_t labels, std::uint64_t samples,
                      std::uint32_t payload_bytes);
  LedgerTotals snapshot() const;

 private:
  mutable std::mutex mu_;
  LedgerTotals t_;
};

/// Activation floats per sample over what a centralized design would send
/// (M*W floats). DMH-T lands exactly on 1/W, DMH-E on H/(M*W).
double transmission_ratio(const LedgerTotals& totals, std::size_t M, std::size_t W);

void write_ledger(const std::string& path, const LedgerTotals& totals, std::size_t M,
                  std::size_t W);

}  // namespace dmh
