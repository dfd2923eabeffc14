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


#include "empchat/server/worker_pool.hpp"

#include <algorithm>
#include <stdexcept>

namespace empchat {

std::optional<std::size_t> pick_idle_worker(std::span<const WorkerLoad> loads) {
  std::optional<std::size_t> best;
  const WorkerLoad* best_load = nullptr;
  for (const WorkerLoad& w : loads) {
    if (w.busy) continue;
    if (!best_load || w.completed < best_load->completed ||
        (w.completed == best_load->completed && w.worker_id < best_load->worker_id)) {
      best_load = &w;
      best = w.worker_id;
    }
  }
  return best;
}

WorkerPool::WorkerPool(std::size_t workers, std::size_t queue_capacity)
    : slots_(workers), capacity_(queue_capacity) {
  if (workers == 0) throw std::invalid_argument("WorkerPool: need at least one worker");
  threads_.reserve(workers);
  for (std::size_t i = 0; i < workers; ++i) threads_.emplace_back([this, i] { run(i); });
}

WorkerPool::~WorkerPool() { shutdown(); }

bool WorkerPool::assign_locked(Job& job) {
  std::vector<WorkerLoad> loads(slots_.size());
  for (std::size_t i = 0; i < slots_.size(); ++i)
    loads[i] = {i, slots_[i].completed, slots_[i].job.has_value()};
  const auto id = pick_idle_worker(loads);
  if (!id) return false;
  slots_[*id].job = std::move(job);
  slots_[*id].wake.notify_one();
  return true;
}

void WorkerPool::dispatch_locked() {
  while (!queue_.empty()) {
    if (!assign_locked(queue_.front())) return;
    queue_.pop_front();
  }
}

bool WorkerPool::submit(Job job) {
  std::lock_guard lock(mutex_);
  if (stopping_) return false;
  if (queue_.empty() && assign_locked(job)) return true;
  if (queue_.size() >= capacity_) return false;
  queue_.push_back(std::move(job));
  return true;
}

void WorkerPool::run(std::size_t id) {
  Slot& slot = slots_[id];
  std::unique_lock lock(mutex_);
  for (;;) {
    slot.wake.wait(lock, [&] { return slot.job.has_value() || (stopping_ && queue_.empty()); });
    if (!slot.job) return;
    ++slot.in_flight;
    slot.max_in_flight = std::max(slot.max_in_flight, slot.in_flight);
    Job job = std::move(*slot.job);
    lock.unlock();
    try {
      job(id);
    } catch (...) {
    }
    lock.lock();
    --slot.in_flight;
    ++slot.completed;
    slot.job.reset();
    dispatch_locked();
    if (stopping_ && queue_.empty())
      for (Slot& s : slots_) s.wake.notify_one();
  }
}

std::size_t WorkerPool::queue_depth() const {
  std::lock_guard lock(mutex_);
  return queue_.size();
}

std::vector<WorkerStats> WorkerPool::stats() const {
  std::lock_guard lock(mutex_);
  std::vector<WorkerStats> out;
  out.reserve(slots_.size());
  for (std::size_t i = 0; i < slots_.size(); ++i)
    out.push_back({i, slots_[i].in_flight, slots_[i].max_in_flight, slots_[i].completed});
  return out;
}

void WorkerPool::shutdown() {
  {
    std::lock_guard lock(mutex_);
    if (stopping_ && threads_.empty()) return;
    stopping_ = true;
    for (Slot& s : slots_) s.wake.notify_one();
  }
  for (std::thread& t : threads_)
    if (t.joinable()) t.join();
  threads_.clear();
}

}  // namespace empchat
