#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <stdexcept>
#include <string>

#include "eabm/feed.hpp"

namespace eabm::feed {

// Optional datagram publisher mirroring the in-process channel byte layout:
// one encoded record per datagram. Excluded from deterministic test runs.
class UdpPublisher {
 public:
  UdpPublisher(const std::string& host, uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd_ < 0) throw std::runtime_error("UdpPublisher: socket() failed");
    std::memset(&addr_, 0, sizeof(addr_));
    addr_.sin_family = AF_INET;
    addr_.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr_.sin_addr) != 1) {
      ::close(fd_);
      throw std::runtime_error("UdpPublisher: bad host address " + host);
    }
  }

  UdpPublisher(const UdpPublisher&) = delete;
  UdpPublisher& operator=(const UdpPublisher&) = delete;

  ~UdpPublisher() {
    if (fd_ >= 0) ::close(fd_);
  }

  // Best effort; send failures are counted, not thrown.
  void publish(const MarketEvent& e) {
    EncodedEvent rec = encode(e);
    ssize_t n = ::sendto(fd_, rec.data(), rec.size(), 0,
                         reinterpret_cast<const sockaddr*>(&addr_), sizeof(addr_));
    if (n != static_cast<ssize_t>(rec.size())) ++send_failures_;
  }

  uint64_t send_failures() const { return send_failures_; }

 private:
  int fd_ = -1;
  sockaddr_in addr_{};
  uint64_t send_failures_ = 0;
};

}  // namespace eabm::feed
