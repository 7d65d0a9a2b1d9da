#include "tsac/replay.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace tsac::replay {

namespace {

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument(std::string("replay: non-finite ") + what);
  }
}

}  // namespace

Segment::Segment(int length, int obs_dim, int act_dim)
    : length(length), obs_dim(obs_dim), act_dim(act_dim),
      states(sz((length + 1) * obs_dim)), actions(sz(length * act_dim)),
      rewards(sz(length)), dones(sz(length)), mask(sz(length)) {}

std::span<const double> Segment::state(int t) const {
  return {states.data() + sz(t * obs_dim), sz(obs_dim)};
}
std::span<const double> Segment::action(int t) const {
  return {actions.data() + sz(t * act_dim), sz(act_dim)};
}
std::span<double> Segment::state(int t) { return {states.data() + sz(t * obs_dim), sz(obs_dim)}; }
std::span<double> Segment::action(int t) { return {actions.data() + sz(t * act_dim), sz(act_dim)}; }

void Segment::rebuild_mask() {
  bool alive = true;
  for (int t = 0; t < length; ++t) {
    mask[sz(t)] = alive ? 1 : 0;
    if (dones[sz(t)]) alive = false;
  }
}

std::span<const double> Window::state(int i) const {
  return {states.data() + sz(i * obs_dim), sz(obs_dim)};
}
std::span<const double> Window::action(int i) const {
  return {actions.data() + sz(i * act_dim), sz(act_dim)};
}

ReplayBuffer::ReplayBuffer(std::size_t capacity_segments, int segment_length, int obs_dim,
                           int act_dim)
    : length_(segment_length), obs_dim_(obs_dim), act_dim_(act_dim) {
  if (capacity_segments == 0) throw std::invalid_argument("replay: capacity must be positive");
  if (segment_length < 1) throw std::invalid_argument("replay: segment length must be positive");
  if (obs_dim < 1 || act_dim < 1) throw std::invalid_argument("replay: dimensions must be positive");
  slots_.resize(capacity_segments);
  serials_.assign(capacity_segments, 0);
  coverage_.resize(capacity_segments);
  open_ = Segment(length_, obs_dim_, act_dim_);
}

std::optional<std::size_t> ReplayBuffer::append_transition(std::span<const double> s,
                                                           std::span<const double> a, double r,
                                                           bool done,
                                                           std::span<const double> s_next) {
  if (s.size() != sz(obs_dim_) || s_next.size() != sz(obs_dim_)) {
    throw std::invalid_argument("replay: state has " + std::to_string(s.size()) +
                                " entries, expected " + std::to_string(obs_dim_));
  }
  if (a.size() != sz(act_dim_)) {
    throw std::invalid_argument("replay: action has " + std::to_string(a.size()) +
                                " entries, expected " + std::to_string(act_dim_));
  }
  check_finite(s, "state");
  check_finite(a, "action");
  check_finite(s_next, "next state");
  if (!std::isfinite(r)) throw std::invalid_argument("replay: non-finite reward");

  const int t = open_cursor_;
  std::copy(s.begin(), s.end(), open_.state(t).begin());
  std::copy(a.begin(), a.end(), open_.action(t).begin());
  open_.rewards[sz(t)] = r;
  open_.dones[sz(t)] = done ? 1 : 0;
  ++open_cursor_;
  if (open_cursor_ < length_) {
    // Provisional successor; overwritten by the next transition's state.
    std::copy(s_next.begin(), s_next.end(), open_.state(open_cursor_).begin());
    return std::nullopt;
  }
  std::copy(s_next.begin(), s_next.end(), open_.state(length_).begin());
  open_.rebuild_mask();
  Segment done_seg = std::move(open_);
  open_ = Segment(length_, obs_dim_, act_dim_);
  open_cursor_ = 0;
  return commit(std::move(done_seg));
}

std::size_t ReplayBuffer::commit(Segment seg) {
  if (seg.length != length_ || seg.obs_dim != obs_dim_ || seg.act_dim != act_dim_) {
    throw std::invalid_argument("replay: segment shape does not match the buffer");
  }
  const std::size_t slot = write_;
  slots_[slot] = std::move(seg);
  serials_[slot] = commits_++;
  coverage_[slot].assign(sz(length_), 0);
  write_ = (write_ + 1) % slots_.size();
  size_ = std::min(size_ + 1, slots_.size());
  return slot;
}

const Segment& ReplayBuffer::segment(std::size_t slot) const {
  if (slot >= size_) throw std::out_of_range("replay: slot not committed");
  return slots_[slot];
}

std::uint64_t ReplayBuffer::serial(std::size_t slot) const {
  if (slot >= size_) throw std::out_of_range("replay: slot not committed");
  return serials_[slot];
}

void ReplayBuffer::check_bounds(WindowBounds b) const {
  if (b.l_min < 1 || b.l_min > b.l_max || b.l_max > length_) {
    throw std::invalid_argument("replay: need 1 <= l_min <= l_max <= segment length");
  }
}

std::pair<int, int> draw_start_and_horizon(int segment_length, WindowBounds b,
                                           std::mt19937_64& rng) {
  if (b.l_min < 1 || b.l_min > b.l_max || b.l_max > segment_length) {
    throw std::invalid_argument("replay: need 1 <= l_min <= l_max <= segment length");
  }
  std::uniform_int_distribution<int> start(0, segment_length - 1);
  std::uniform_int_distribution<int> len(b.l_min, b.l_max);
  const int p = start(rng);
  const int l = len(rng);
  return {p, std::min(l, segment_length - p)};
}

std::pair<int, int> ReplayBuffer::draw_start_and_horizon(WindowBounds b,
                                                         std::mt19937_64& rng) const {
  return replay::draw_start_and_horizon(length_, b, rng);
}

std::size_t ReplayBuffer::draw_segment(std::mt19937_64& rng) const {
  if (size_ == 0) throw std::logic_error("replay: cannot sample from an empty buffer");
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  return pick(rng);
}

Window ReplayBuffer::make_window(std::size_t slot, int start, int horizon) const {
  const Segment& seg = segment(slot);
  if (start < 0 || start >= length_ || horizon < 1) {
    throw std::invalid_argument("replay: invalid window start/horizon");
  }
  horizon = std::min(horizon, length_ - start);
  Window w;
  w.segment = slot;
  w.start = start;
  w.horizon = horizon;
  w.obs_dim = obs_dim_;
  w.act_dim = act_dim_;
  const auto s0 = seg.states.begin() + static_cast<std::ptrdiff_t>(start * obs_dim_);
  w.states.assign(s0, s0 + (horizon + 1) * obs_dim_);
  const auto a0 = seg.actions.begin() + static_cast<std::ptrdiff_t>(start * act_dim_);
  w.actions.assign(a0, a0 + horizon * act_dim_);
  w.rewards.assign(seg.rewards.begin() + start, seg.rewards.begin() + start + horizon);
  w.dones.assign(seg.dones.begin() + start, seg.dones.begin() + start + horizon);
  w.mask.assign(seg.mask.begin() + start, seg.mask.begin() + start + horizon);
  return w;
}

std::vector<Window> ReplayBuffer::sample_windows(std::size_t batch_size, WindowBounds b,
                                                 std::mt19937_64& rng) {
  if (size_ == 0) throw std::logic_error("replay: cannot sample from an empty buffer");
  check_bounds(b);
  std::vector<Window> out;
  out.reserve(batch_size);
  for (std::size_t k = 0; k < batch_size; ++k) {
    const std::size_t slot = draw_segment(rng);
    const auto [p, n] = draw_start_and_horizon(b, rng);
    note_sampled(slot, p, n);
    out.push_back(make_window(slot, p, n));
  }
  return out;
}

void ReplayBuffer::note_sampled(std::size_t slot, int start, int horizon) {
  auto& cov = coverage_.at(slot);
  for (int t = start; t < std::min(start + horizon, length_); ++t) ++cov[sz(t)];
}

std::uint32_t ReplayBuffer::times_sampled(std::size_t slot, int t) const {
  return coverage_.at(slot).at(sz(t));
}

std::size_t ReplayBuffer::never_sampled_since(std::uint64_t first_serial) const {
  std::size_t count = 0;
  for (std::size_t slot = 0; slot < size_; ++slot) {
    if (serials_[slot] < first_serial) continue;
    count += static_cast<std::size_t>(
        std::count(coverage_[slot].begin(), coverage_[slot].end(), 0u));
  }
  return count;
}

void write_segments(std::ostream& os, const ReplayBuffer& buf) {
  os << "tsac-segments 1 " << buf.segment_length() << ' ' << buf.obs_dim() << ' '
     << buf.act_dim() << ' ' << buf.size() << '\n';
  const auto old = os.precision(std::numeric_limits<double>::max_digits10);
  for (std::size_t slot = 0; slot < buf.size(); ++slot) {
    const Segment& s = buf.segment(slot);
    const char* sep = "";
    auto put = [&](auto x) {
      os << sep << x;
      sep = " ";
    };
    for (double x : s.states) put(x);
    for (double x : s.actions) put(x);
    for (double x : s.rewards) put(x);
    for (auto d : s.dones) put(static_cast<int>(d));
    for (auto m : s.mask) put(static_cast<int>(m));
    os << '\n';
  }
  os.precision(old);
}

std::vector<Segment> read_segments(std::istream& is) {
  std::string magic;
  int version = 0;
  int L = 0;
  int obs = 0;
  int act = 0;
  std::size_t count = 0;
  if (!(is >> magic >> version >> L >> obs >> act >> count) || magic != "tsac-segments" ||
      version != 1) {
    throw std::runtime_error("replay: not a tsac-segments v1 table");
  }
  std::vector<Segment> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Segment s(L, obs, act);
    auto read = [&](auto& v) {
      for (auto& x : v) {
        double d = 0.0;
        if (!(is >> d)) throw std::runtime_error("replay: truncated segment table");
        x = static_cast<std::remove_reference_t<decltype(x)>>(d);
      }
    };
    read(s.states);
    read(s.actions);
    read(s.rewards);
    read(s.dones);
    read(s.mask);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace tsac::replay
