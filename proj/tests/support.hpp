#pragma once

#include <atomic>
#include <deque>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <unistd.h>

#include "polex/mdp.hpp"

namespace polex::testing {

// Directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("polex-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline constexpr std::size_t kUnreachable = std::numeric_limits<std::size_t>::max();

// Fewest steps from each state to any terminal state, by reverse BFS over
// the (deterministic or not) transition graph.
inline std::vector<std::size_t> steps_to_terminal(const DomainModel& d) {
  std::vector<std::vector<StateId>> preds(d.num_states());
  for (const auto& s : d.states()) {
    if (s.terminal) continue;
    for (ActionId a = 0; a < d.num_actions(); ++a)
      for (const auto& o : d.outcomes(s.id, a))
        if (o.prob > 0.0) preds[o.next].push_back(s.id);
  }
  std::vector<std::size_t> dist(d.num_states(), kUnreachable);
  std::deque<StateId> queue;
  for (const auto& s : d.states())
    if (s.terminal) {
      dist[s.id] = 0;
      queue.push_back(s.id);
    }
  while (!queue.empty()) {
    const StateId s = queue.front();
    queue.pop_front();
    for (StateId p : preds[s])
      if (dist[p] == kUnreachable) {
        dist[p] = dist[s] + 1;
        queue.push_back(p);
      }
  }
  return dist;
}

}  // namespace polex::testing
