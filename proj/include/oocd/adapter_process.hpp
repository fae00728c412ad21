// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstdio>
#include <mutex>
#include <string>
#include <sys/types.h>
#include <vector>

#include "json.hpp"

namespace oocd {

// Out-of-process model adapter speaking one JSON request per line on stdin
// and one JSON response per line on stdout:
//
//   request:  {"id": <n>, "kind": "<kind>", "payload": ..., "config": {...}}
//   response: {"id": <n>, "ok": true, "result": ...}
//          or {"id": <n>, "ok": false, "error": "<message>"}
//
// The process is started lazily on the first request and requests are
// serialized, since adapters are assumed non-reentrant.
class AdapterProcess {
 public:
  explicit AdapterProcess(std::vector<std::string> argv);
  ~AdapterProcess();

  AdapterProcess(const AdapterProcess&) = delete;
  AdapterProcess& operator=(const AdapterProcess&) = delete;

  // Returns the "result" member. Throws BackendUnavailable when the process
  // cannot be started or dies, ProtocolError on a malformed or mismatched
  // response, GenerationFailed carrying the adapter's error when ok=false.
  nlohmann::json request(const std::string& kind, nlohmann::json payload,
                         nlohmann::json config);

  const std::vector<std::string>& argv() const noexcept { return argv_; }

 private:
  void start();
  void stop() noexcept;

  std::vector<std::string> argv_;
  std::mutex mutex_;
  pid_t pid_ = -1;
  std::FILE* to_child_ = nullptr;
  std::FILE* from_child_ = nullptr;
  std::uint64_t next_id_ = 1;
};

}  // namespace oocd
