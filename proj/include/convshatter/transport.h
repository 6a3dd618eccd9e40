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

#ifndef CONVSHATTER_TRANSPORT_H_
#define CONVSHATTER_TRANSPORT_H_

#include <sys/types.h>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "convshatter/serialization.h"

namespace convshatter {

// Request/reply channel between the trusted and untrusted side. Counts the
// message bytes that cross it in both directions.
class Transport {
 public:
  virtual ~Transport() = default;

  Bytes Exchange(std::span<const std::uint8_t> request);

  std::uint64_t bytes_sent() const { return sent_; }
  std::uint64_t bytes_received() const { return received_; }
  std::uint64_t total_bytes() const { return sent_ + received_; }

  // Optional tap on every message, for census tests.
  using Observer = std::function<void(std::span<const std::uint8_t> request,
                                      std::span<const std::uint8_t> reply)>;
  void SetObserver(Observer observer) { observer_ = std::move(observer); }

 protected:
  virtual Bytes DoExchange(std::span<const std::uint8_t> request) = 0;

 private:
  std::uint64_t sent_ = 0;
  std::uint64_t received_ = 0;
  Observer observer_;
};

class InProcessTransport : public Transport {
 public:
  using Handler = std::function<Bytes(std::span<const std::uint8_t>)>;
  explicit InProcessTransport(Handler handler) : handler_(std::move(handler)) {}

 protected:
  Bytes DoExchange(std::span<const std::uint8_t> request) override;

 private:
  Handler handler_;
};

// Length-prefixed frames (u64 LE) over a Unix socket pair to a child
// process.
class SocketTransport : public Transport {
 public:
  // Forks; the child runs serve(fd) and exits.
  static std::unique_ptr<SocketTransport> Fork(std::function<void(int)> serve);
  // Forks and execs argv with "{fd}" in any argument replaced by the child's
  // socket descriptor.
  static std::unique_ptr<SocketTransport> Spawn(std::vector<std::string> argv);

  ~SocketTransport() override;
  SocketTransport(const SocketTransport&) = delete;
  SocketTransport& operator=(const SocketTransport&) = delete;

 protected:
  Bytes DoExchange(std::span<const std::uint8_t> request) override;

 private:
  SocketTransport(int fd, pid_t child) : fd_(fd), child_(child) {}

  int fd_ = -1;
  pid_t child_ = -1;
};

// Frame helpers. ReadFrame returns false on a clean EOF; both throw IoError
// on failure.
void WriteFrame(int fd, std::span<const std::uint8_t> bytes);
bool ReadFrame(int fd, Bytes& out);

// Serves frames on fd with `handler` until the peer closes.
void ServeFrames(int fd,
                 const std::function<Bytes(std::span<const std::uint8_t>)>& handler);

}  // namespace convshatter

#endif  // CONVSHATTER_TRANSPORT_H_
