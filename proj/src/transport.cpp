#include "dmh/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>

namespace dmh {

namespace {

struct Channel {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<WireMessage> q;
  bool closed = false;

  void push(const WireMessage& msg) {
    {
      std::lock_guard<std::mutex> lock(mu);
      if (closed) throw TransportError("send on a closed channel");
      q.push_back(msg);
    }
    cv.notify_one();
  }

  WireMessage pop() {
    std::unique_lock<std::mutex> lock(mu);
    cv.wait(lock, [&] { return !q.empty() || closed; });
    if (q.empty()) throw TransportError("peer closed the channel");
    WireMessage msg = std::move(q.front());
    q.pop_front();
    return msg;
  }

  void close() {
    {
      std::lock_guard<std::mutex> lock(mu);
      closed = true;
    }
    cv.notify_all();
  }
};

class QueueEndpoint : public Transport {
 public:
  QueueEndpoint(std::shared_ptr<Channel> out, std::shared_ptr<Channel> in)
      : out_(std::move(out)), in_(std::move(in)) {}
  ~QueueEndpoint() override { out_->close(); }

  void send(const WireMessage& msg) override { out_->push(msg); }
  WireMessage receive() override { return in_->pop(); }

 private:
  std::shared_ptr<Channel> out_, in_;
};

class FdTransport : public Transport {
 public:
  explicit FdTransport(int fd) : fd_(fd) {}
  ~FdTransport() override {
    if (fd_ >= 0) ::close(fd_);
  }

  void send(const WireMessage& msg) override {
    auto bytes = encode_message(msg);
    std::size_t at = 0;
    while (at < bytes.size()) {
      ssize_t n = ::write(fd_, bytes.data() + at, bytes.size() - at);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("stream write failed: ") + std::strerror(errno));
      }
      at += static_cast<std::size_t>(n);
    }
  }

  WireMessage receive() override {
    std::vector<std::uint8_t> buf(kWireHeaderBytes);
    read_exact(buf.data(), kWireHeaderBytes);
    WireHeader header = decode_header(buf.data(), buf.size());
    buf.resize(kWireHeaderBytes + header.payload_len);
    read_exact(buf.data() + kWireHeaderBytes, header.payload_len);
    return decode_message(buf);
  }

 private:
  void read_exact(std::uint8_t* dst, std::size_t want) {
    std::size_t at = 0;
    while (at < want) {
      ssize_t n = ::read(fd_, dst + at, want - at);
      if (n == 0) throw TransportError("peer closed the stream");
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("stream read failed: ") + std::strerror(errno));
      }
      at += static_cast<std::size_t>(n);
    }
  }

  int fd_;
};

}  // namespace

TransportPair make_queue_pair() {
  auto ab = std::make_shared<Channel>();
  auto ba = std::make_shared<Channel>();
  return {std::make_unique<QueueEndpoint>(ab, ba), std::make_unique<QueueEndpoint>(ba, ab)};
}

TransportPair make_stream_pair() {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) {
    throw TransportError(std::string("socketpair failed: ") + std::strerror(errno));
  }
  return {std::make_unique<FdTransport>(fds[0]), std::make_unique<FdTransport>(fds[1])};
}

int listen_tcp(const std::string& host, int port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw TransportError(std::string("socket failed: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw TransportError("bad listen address " + host);
  }
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    ::close(fd);
    throw TransportError("bind " + host + ":" + std::to_string(port) + " failed: " +
                         std::strerror(errno));
  }
  if (::listen(fd, 16) != 0) {
    ::close(fd);
    throw TransportError(std::string("listen failed: ") + std::strerror(errno));
  }
  return fd;
}

std::unique_ptr<Transport> accept_stream(int listen_fd) {
  for (;;) {
    int fd = ::accept(listen_fd, nullptr, nullptr);
    if (fd >= 0) return std::make_unique<FdTransport>(fd);
    if (errno != EINTR) {
      throw TransportError(std::string("accept failed: ") + std::strerror(errno));
    }
  }
}

std::unique_ptr<Transport> connect_stream(const std::string& host, int port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw TransportError(std::string("socket failed: ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw TransportError("bad server address " + host);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    ::close(fd);
    throw TransportError("connect " + host + ":" + std::to_string(port) + " failed: " +
                         std::strerror(errno));
  }
  return std::make_unique<FdTransport>(fd);
}

}  // namespace dmh
