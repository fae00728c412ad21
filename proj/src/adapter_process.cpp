// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "oocd/adapter_process.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "oocd/error.hpp"

namespace oocd {

using nlohmann::json;

AdapterProcess::AdapterProcess(std::vector<std::string> argv)
    : argv_(std::move(argv)) {
  if (argv_.empty()) throw BackendUnavailable("adapter command is empty");
}

AdapterProcess::~AdapterProcess() { stop(); }

void AdapterProcess::start() {
  int in_pipe[2];   // parent -> child
  int out_pipe[2];  // child -> parent
  if (pipe(in_pipe) != 0) {
    throw BackendUnavailable(std::string("pipe: ") + std::strerror(errno));
  }
  if (pipe(out_pipe) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    throw BackendUnavailable(std::string("pipe: ") + std::strerror(errno));
  }

  // Exec failure is reported through a close-on-exec pipe.
  int status_pipe[2];
  if (pipe2(status_pipe, O_CLOEXEC) != 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
    throw BackendUnavailable(std::string("pipe: ") + std::strerror(errno));
  }

  std::vector<char*> args;
  for (auto& a : argv_) args.push_back(a.data());
  args.push_back(nullptr);

  pid_t pid = fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1],
                   status_pipe[0], status_pipe[1]}) {
      close(fd);
    }
    throw BackendUnavailable(std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    close(status_pipe[0]);
    execvp(args[0], args.data());
    int err = errno;
    ssize_t ignored = write(status_pipe[1], &err, sizeof(err));
    (void)ignored;
    _exit(127);
  }

  close(in_pipe[0]);
  close(out_pipe[1]);
  close(status_pipe[1]);
  int exec_errno = 0;
  ssize_t n = read(status_pipe[0], &exec_errno, sizeof(exec_errno));
  close(status_pipe[0]);
  if (n > 0) {
    close(in_pipe[1]);
    close(out_pipe[0]);
    waitpid(pid, nullptr, 0);
    throw BackendUnavailable("cannot execute adapter '" + argv_[0] +
                             "': " + std::strerror(exec_errno));
  }

  pid_ = pid;
  to_child_ = fdopen(in_pipe[1], "w");
  from_child_ = fdopen(out_pipe[0], "r");
}

void AdapterProcess::stop() noexcept {
  if (to_child_) std::fclose(to_child_);
  if (from_child_) std::fclose(from_child_);
  to_child_ = nullptr;
  from_child_ = nullptr;
  if (pid_ > 0) {
    // Closing stdin asks the adapter to exit; give it a moment, then kill.
    int status = 0;
    for (int i = 0; i < 50; ++i) {
      if (waitpid(pid_, &status, WNOHANG) == pid_) {
        pid_ = -1;
        return;
      }
      usleep(10000);
    }
    kill(pid_, SIGKILL);
    waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

json AdapterProcess::request(const std::string& kind, json payload,
                             json config) {
  std::lock_guard lock(mutex_);
  if (pid_ <= 0) start();

  const std::uint64_t id = next_id_++;
  json req = {{"id", id},
              {"kind", kind},
              {"payload", std::move(payload)},
              {"config", std::move(config)}};
  const std::string line = req.dump() + "\n";

  // A dead child shows up as SIGPIPE on write; ignore it for this thread's
  // write and report through the error path instead.
  struct sigaction ignore {}, previous {};
  ignore.sa_handler = SIG_IGN;
  sigaction(SIGPIPE, &ignore, &previous);
  const bool wrote = std::fwrite(line.data(), 1, line.size(), to_child_) ==
                         line.size() &&
                     std::fflush(to_child_) == 0;
  sigaction(SIGPIPE, &previous, nullptr);
  if (!wrote) {
    stop();
    throw BackendUnavailable("adapter '" + argv_[0] + "' is not accepting requests");
  }

  std::string response;
  int c;
  while ((c = std::fgetc(from_child_)) != EOF && c != '\n') {
    response.push_back(static_cast<char>(c));
  }
  if (c == EOF && response.empty()) {
    stop();
    throw BackendUnavailable("adapter '" + argv_[0] + "' exited unexpectedly");
  }

  json resp;
  try {
    resp = json::parse(response);
  } catch (const json::parse_error& e) {
    throw ProtocolError("adapter response is not JSON: " + response);
  }
  if (!resp.is_object() || !resp.contains("id") || !resp.contains("ok")) {
    throw ProtocolError("adapter response lacks id/ok: " + response);
  }
  if (resp["id"] != id) {
    throw ProtocolError("adapter answered id " + resp["id"].dump() +
                        ", expected " + std::to_string(id));
  }
  if (!resp["ok"].get<bool>()) {
    throw GenerationFailed(resp.value("error", std::string("adapter reported failure")));
  }
  if (!resp.contains("result")) throw ProtocolError("ok response without result");
  return resp["result"];
}

}  // namespace oocd
