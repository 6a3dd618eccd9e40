// Copyright 2026 The ConvShatter Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "convshatter/transport.h"

#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "convshatter/error.h"

namespace convshatter {
namespace {

constexpr std::uint64_t kMaxFrame = std::uint64_t{1} << 34;

void SendAll(int fd, const std::uint8_t* data, std::size_t size) {
  while (size > 0) {
    const ssize_t n = ::send(fd, data, size, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError(std::string("socket send failed: ") + std::strerror(errno));
    }
    data += n;
    size -= static_cast<std::size_t>(n);
  }
}

// Returns bytes read before EOF.
std::size_t RecvAll(int fd, std::uint8_t* data, std::size_t size) {
  std::size_t got = 0;
  while (got < size) {
    const ssize_t n = ::recv(fd, data + got, size - got, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError(std::string("socket recv failed: ") + std::strerror(errno));
    }
    if (n == 0) break;
    got += static_cast<std::size_t>(n);
  }
  return got;
}

std::pair<int, int> MakeSocketPair() {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) {
    throw IoError(std::string("socketpair failed: ") + std::strerror(errno));
  }
  return {fds[0], fds[1]};
}

}  // namespace

Bytes Transport::Exchange(std::span<const std::uint8_t> request) {
  Bytes reply = DoExchange(request);
  sent_ += request.size();
  received_ += reply.size();
  if (observer_) observer_(request, reply);
  return reply;
}

Bytes InProcessTransport::DoExchange(std::span<const std::uint8_t> request) {
  return handler_(request);
}

void WriteFrame(int fd, std::span<const std::uint8_t> bytes) {
  std::uint8_t header[8];
  const std::uint64_t len = bytes.size();
  for (int b = 0; b < 8; ++b) header[b] = static_cast<std::uint8_t>(len >> (8 * b));
  SendAll(fd, header, sizeof header);
  SendAll(fd, bytes.data(), bytes.size());
}

bool ReadFrame(int fd, Bytes& out) {
  std::uint8_t header[8];
  const std::size_t got = RecvAll(fd, header, sizeof header);
  if (got == 0) return false;
  if (got != sizeof header) throw IoError("peer closed inside a frame header");
  std::uint64_t len = 0;
  for (int b = 0; b < 8; ++b) len |= static_cast<std::uint64_t>(header[b]) << (8 * b);
  if (len > kMaxFrame) throw IoError("frame too large");
  out.resize(len);
  if (RecvAll(fd, out.data(), len) != len) {
    throw IoError("peer closed inside a frame");
  }
  return true;
}

void ServeFrames(
    int fd, const std::function<Bytes(std::span<const std::uint8_t>)>& handler) {
  Bytes request;
  while (ReadFrame(fd, request)) WriteFrame(fd, handler(request));
}

std::unique_ptr<SocketTransport> SocketTransport::Fork(
    std::function<void(int)> serve) {
  auto [parent_fd, child_fd] = MakeSocketPair();
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(parent_fd);
    ::close(child_fd);
    throw IoError(std::string("fork failed: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::close(parent_fd);
    int status = 0;
    try {
      serve(child_fd);
    } catch (...) {
      status = 1;
    }
    ::close(child_fd);
    ::_exit(status);
  }
  ::close(child_fd);
  return std::unique_ptr<SocketTransport>(new SocketTransport(parent_fd, pid));
}

std::unique_ptr<SocketTransport> SocketTransport::Spawn(
    std::vector<std::string> argv) {
  if (argv.empty()) throw IoError("empty worker command");
  auto [parent_fd, child_fd] = MakeSocketPair();
  const std::string fd_text = std::to_string(child_fd);
  for (auto& arg : argv) {
    for (auto pos = arg.find("{fd}"); pos != std::string::npos;
         pos = arg.find("{fd}")) {
      arg.replace(pos, 4, fd_text);
    }
  }
  std::vector<char*> raw;
  for (auto& arg : argv) raw.push_back(arg.data());
  raw.push_back(nullptr);
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(parent_fd);
    ::close(child_fd);
    throw IoError(std::string("fork failed: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::close(parent_fd);
    ::execv(raw[0], raw.data());
    ::_exit(127);
  }
  ::close(child_fd);
  return std::unique_ptr<SocketTransport>(new SocketTransport(parent_fd, pid));
}

SocketTransport::~SocketTransport() {
  if (fd_ >= 0) ::close(fd_);
  if (child_ > 0) {
    int status = 0;
    while (::waitpid(child_, &status, 0) < 0 && errno == EINTR) {
    }
  }
}

Bytes SocketTransport::DoExchange(std::span<const std::uint8_t> request) {
  WriteFrame(fd_, request);
  Bytes reply;
  if (!ReadFrame(fd_, reply)) throw IoError("worker process closed the channel");
  return reply;
}

}  // namespace convshatter
