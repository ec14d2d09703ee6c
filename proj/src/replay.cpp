#include "incdyn/replay.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace incdyn {

namespace {

void check_transition(const Transition& t) {
  const auto n = t.s.size();
  const auto m = t.a.size();
  require(n >= 1 && m >= 1, "transition needs non-empty state and action");
  require(t.s_prev.size() == n && t.s_next.size() == n && t.a_prev.size() == m,
          "transition vectors are dimension-inconsistent");
  require(t.s_prev.allFinite() && t.a_prev.allFinite() && t.s.allFinite() &&
              t.a.allFinite() && t.s_next.allFinite() && std::isfinite(t.reward),
          "transition has non-finite entries");
}

static_assert(std::endian::native == std::endian::little,
              "snapshot I/O assumes a little-endian host");

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_vec(std::ostream& out, const Vec& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

double read_f64(std::istream& in) {
  double v = 0.0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

Vec read_vec(std::istream& in, std::uint64_t n) {
  Vec v(static_cast<Eigen::Index>(n));
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  return v;
}

}  // namespace

bool operator==(const Transition& lhs, const Transition& rhs) {
  auto same = [](const Vec& x, const Vec& y) {
    return x.size() == y.size() &&
           std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
  };
  return same(lhs.s_prev, rhs.s_prev) && same(lhs.a_prev, rhs.a_prev) && same(lhs.s, rhs.s) &&
         same(lhs.a, rhs.a) && std::memcmp(&lhs.reward, &rhs.reward, sizeof(double)) == 0 &&
         same(lhs.s_next, rhs.s_next) && lhs.done == rhs.done &&
         lhs.is_imagined == rhs.is_imagined;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  require(capacity >= 1, "replay capacity must be >= 1");
  storage_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
  check_transition(t);
  if (size_ > 0) {
    const Transition& first = storage_.front();
    require(t.state_dim() == first.state_dim() && t.action_dim() == first.action_dim(),
            "transition dimensions differ from buffer contents");
  }
  if (storage_.size() < capacity_) {
    storage_.push_back(std::move(t));
  } else {
    storage_[cursor_] = std::move(t);
  }
  cursor_ = (cursor_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  require(i < size_, "replay index out of range");
  const std::size_t oldest = size_ < capacity_ ? 0 : cursor_;
  return storage_[(oldest + i) % capacity_];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t k, Rng& rng) const {
  if (size_ == 0) throw Error(Errc::no_data, "cannot sample from an empty replay buffer");
  require(k >= 1, "sample size must be >= 1");
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  std::vector<std::size_t> indices(k);
  for (auto& idx : indices) idx = pick(rng);
  return indices;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t k, Rng& rng) const {
  std::vector<Transition> out;
  out.reserve(k);
  for (std::size_t idx : sample_indices(k, rng)) out.push_back(storage_[idx]);
  return out;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t k, std::uint64_t seed) const {
  Rng rng(seed);
  return sample(k, rng);
}

void ReplayBuffer::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  const std::uint64_t n = size_ ? storage_.front().s.size() : 0;
  const std::uint64_t m = size_ ? storage_.front().a.size() : 0;
  write_u64(out, n);
  write_u64(out, m);
  write_u64(out, size_);
  for (std::size_t i = 0; i < size_; ++i) {
    const Transition& t = at(i);
    write_vec(out, t.s_prev);
    write_vec(out, t.a_prev);
    write_vec(out, t.s);
    write_vec(out, t.a);
    write_f64(out, t.reward);
    write_vec(out, t.s_next);
    write_f64(out, t.done ? 1.0 : 0.0);
    write_f64(out, t.is_imagined ? 1.0 : 0.0);
  }
  if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

ReplayBuffer ReplayBuffer::load(const std::filesystem::path& path, std::size_t capacity) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  const std::uint64_t n = read_u64(in);
  const std::uint64_t m = read_u64(in);
  const std::uint64_t size = read_u64(in);
  if (!in) throw Error(Errc::io, "truncated snapshot header in " + path.string());
  ReplayBuffer buf(capacity);
  for (std::uint64_t i = 0; i < size; ++i) {
    Transition t;
    t.s_prev = read_vec(in, n);
    t.a_prev = read_vec(in, m);
    t.s = read_vec(in, n);
    t.a = read_vec(in, m);
    t.reward = read_f64(in);
    t.s_next = read_vec(in, n);
    t.done = read_f64(in) != 0.0;
    t.is_imagined = read_f64(in) != 0.0;
    if (!in) throw Error(Errc::io, "truncated snapshot body in " + path.string());
    buf.push(std::move(t));
  }
  return buf;
}

}  // namespace incdyn
