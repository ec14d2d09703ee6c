#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "incdyn/mathcore.hpp"
#include "incdyn/rng.hpp"

namespace incdyn {

/// One environment step together with its one-step-backward context
/// (s_{t-1}, a_{t-1}). At episode start s_prev = s and a_prev = 0.
struct Transition {
  Vec s_prev;
  Vec a_prev;
  Vec s;
  Vec a;
  double reward = 0.0;
  Vec s_next;
  bool done = false;  // termination only, never the time limit
  bool is_imagined = false;

  int state_dim() const { return static_cast<int>(s.size()); }
  int action_dim() const { return static_cast<int>(a.size()); }
};

bool operator==(const Transition& lhs, const Transition& rhs);

/// Fixed-capacity FIFO ring. Once full, each push overwrites the oldest entry.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);

  // i.i.d. uniform draws with replacement
  std::vector<Transition> sample(std::size_t k, std::uint64_t seed) const;
  std::vector<Transition> sample(std::size_t k, Rng& rng) const;
  std::vector<std::size_t> sample_indices(std::size_t k, Rng& rng) const;

  /// i = 0 is the oldest stored transition.
  const Transition& at(std::size_t i) const;
  /// Raw slot access (no FIFO reordering); valid for i < size().
  const Transition& slot(std::size_t i) const { return storage_[i]; }

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return size_ == 0; }

  /// Little-endian snapshot: uint64 n, m, size; then per transition, oldest
  /// first, float64 s_prev[n], a_prev[m], s[n], a[m], reward, s_next[n], done,
  /// is_imagined.
  void save(const std::filesystem::path& path) const;
  static ReplayBuffer load(const std::filesystem::path& path, std::size_t capacity);

 private:
  std::size_t capacity_;
  std::vector<Transition> storage_;
  std::size_t size_ = 0;
  std::size_t cursor_ = 0;
};

}  // namespace incdyn
