// Copyright 2026 The empchat Authors
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


#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <vector>

namespace empchat {

struct WorkerLoad {
  std::size_t worker_id = 0;
  std::size_t completed = 0;
  bool busy = false;
};

/// Idle worker with the fewest completed jobs, ties to the lowest id.
std::optional<std::size_t> pick_idle_worker(std::span<const WorkerLoad> loads);

struct WorkerStats {
  std::size_t worker_id = 0;
  std::size_t in_flight = 0;
  std::size_t max_in_flight = 0;
  std::size_t completed = 0;
};

/// Fixed set of threads, each running at most one job at a time. Jobs that
/// find no idle worker wait in a bounded FIFO queue.
class WorkerPool {
 public:
  using Job = std::function<void(std::size_t worker_id)>;

  WorkerPool(std::size_t workers, std::size_t queue_capacity);
  ~WorkerPool();

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  /// False when every worker is busy and the queue is full. Exceptions
  /// escaping a job are swallowed; wrap the job to observe them.
  bool submit(Job job);

  std::size_t size() const noexcept { return slots_.size(); }
  std::size_t queue_capacity() const noexcept { return capacity_; }
  std::size_t queue_depth() const;
  std::vector<WorkerStats> stats() const;

  /// Waits for running and queued jobs, then joins the threads.
  void shutdown();

 private:
  struct Slot {
    std::optional<Job> job;
    std::size_t completed = 0;
    std::size_t in_flight = 0;
    std::size_t max_in_flight = 0;
    std::condition_variable wake;
  };

  void run(std::size_t id);
  void dispatch_locked();
  bool assign_locked(Job& job);

  mutable std::mutex mutex_;
  std::vector<Slot> slots_;
  std::deque<Job> queue_;
  std::size_t capacity_;
  bool stopping_ = false;
  std::vector<std::thread> threads_;
};

}  // namespace empchat
