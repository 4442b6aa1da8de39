#pragma once

#include <memory>
#include <string>
#include <utility>

#include "dmh/wire.hpp"

namespace dmh {

struct TransportError : IoError {
  using IoError::IoError;
};

/// Blocking duplex message pipe. Each endpoint belongs to one thread; a
/// session is strictly request-reply, so no pipelining is ever needed.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send(const WireMessage& msg) = 0;
  /// Blocks for the next message; throws TransportError once the peer is gone.
  virtual WireMessage receive() = 0;
};

using TransportPair = std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>>;

/// Deterministic in-process pair of blocking queues (no serialization).
TransportPair make_queue_pair();

/// Connected AF_UNIX socket pair carrying encoded frames.
TransportPair make_stream_pair();

/// TCP loopback variants for a real server endpoint.
int listen_tcp(const std::string& host, int port);  // returns the listening fd
std::unique_ptr<Transport> accept_stream(int listen_fd);
std::unique_ptr<Transport> connect_stream(const std::string& host, int port);

}  // namespace dmh
