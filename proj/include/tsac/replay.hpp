#pragma once

// Segment-structured replay.
//
// Transitions stream into an open segment of fixed length L. A terminal in
// the middle of a segment does not close it: the writer keeps filling from the
// next episode and the action mask is zero for every position after the first
// terminal. Committed segments are stored FIFO and windows (start, horizon)
// are sampled uniformly from them.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace tsac::replay {

struct Segment {
  int length = 0;
  int obs_dim = 0;
  int act_dim = 0;
  std::vector<double> states;        // (length + 1) x obs_dim, row-major
  std::vector<double> actions;       // length x act_dim
  std::vector<double> rewards;       // length
  std::vector<std::uint8_t> dones;   // length
  std::vector<std::uint8_t> mask;    // length

  Segment() = default;
  Segment(int length, int obs_dim, int act_dim);

  std::span<const double> state(int t) const;
  std::span<const double> action(int t) const;
  std::span<double> state(int t);
  std::span<double> action(int t);

  /// Ones up to and including the first terminal, zeros after it.
  void rebuild_mask();
};

/// A (start, horizon) slice of one segment; owns copies of its rows.
struct Window {
  std::size_t segment = 0;
  int start = 0;
  int horizon = 0;
  int obs_dim = 0;
  int act_dim = 0;
  std::vector<double> states;       // (horizon + 1) x obs_dim
  std::vector<double> actions;      // horizon x act_dim
  std::vector<double> rewards;      // horizon
  std::vector<std::uint8_t> dones;  // horizon
  std::vector<std::uint8_t> mask;   // horizon

  std::span<const double> state(int i) const;
  std::span<const double> action(int i) const;
};

struct WindowBounds {
  int l_min = 1;
  int l_max = 1;
};

/// Start uniform on [0, L), length uniform on [l_min, l_max], truncated at the segment end.
std::pair<int, int> draw_start_and_horizon(int segment_length, WindowBounds b, std::mt19937_64& rng);

class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity_segments, int segment_length, int obs_dim, int act_dim);

  /// Feeds one transition; returns the storage slot when it completes a segment.
  std::optional<std::size_t> append_transition(std::span<const double> s, std::span<const double> a,
                                               double r, bool done, std::span<const double> s_next);

  /// Stores an already-built segment (fixtures, restore).
  std::size_t commit(Segment seg);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return slots_.size(); }
  bool empty() const { return size_ == 0; }
  int segment_length() const { return length_; }
  int obs_dim() const { return obs_dim_; }
  int act_dim() const { return act_dim_; }
  int open_length() const { return open_cursor_; }

  const Segment& segment(std::size_t slot) const;

  /// Monotone insertion counter of the segment in `slot` (0 for the first commit).
  std::uint64_t serial(std::size_t slot) const;
  std::uint64_t commits() const { return commits_; }

  std::pair<int, int> draw_start_and_horizon(WindowBounds b, std::mt19937_64& rng) const;

  std::size_t draw_segment(std::mt19937_64& rng) const;

  Window make_window(std::size_t slot, int start, int horizon) const;

  /// B independent draws; each window is recorded in the coverage counters.
  std::vector<Window> sample_windows(std::size_t batch_size, WindowBounds b, std::mt19937_64& rng);

  /// Marks transitions [start, start + horizon) of `slot` as sampled.
  void note_sampled(std::size_t slot, int start, int horizon);
  std::uint32_t times_sampled(std::size_t slot, int t) const;

  /// Transitions in segments committed at or after `first_serial` never covered by a window.
  std::size_t never_sampled_since(std::uint64_t first_serial) const;

 private:
  void check_bounds(WindowBounds b) const;

  int length_;
  int obs_dim_;
  int act_dim_;
  std::vector<Segment> slots_;
  std::vector<std::uint64_t> serials_;
  std::vector<std::vector<std::uint32_t>> coverage_;
  std::size_t size_ = 0;
  std::size_t write_ = 0;
  std::uint64_t commits_ = 0;

  Segment open_;
  int open_cursor_ = 0;
};

// Plain-text dump, one segment per line. Column order:
//   states (row-major, (L+1) x obs_dim), actions (row-major, L x act_dim),
//   rewards (L), dones (L, 0/1), mask (L, 0/1)
// preceded by a header line "tsac-segments 1 <L> <obs_dim> <act_dim> <count>".
void write_segments(std::ostream& os, const ReplayBuffer& buf);
std::vector<Segment> read_segments(std::istream& is);

}  // namespace tsac::replay
