#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mqi/errors.hpp"
#include "mqi/quantum_state.hpp"

namespace mqi {

// Detector-pair coincidences and Stokes singles for one channel and setting.
// Naming follows the detectors: s1t2 counts D_S1 together with D_T2.
template <class Count>
struct DetectorCounts {
  Count s1t1{};
  Count s1t2{};
  Count s2t1{};
  Count s2t2{};
  Count s1{};
  Count s2{};

  Count matched() const { return s1t1 + s2t2; }
  Count crossed() const { return s1t2 + s2t1; }
  Count coincidences() const { return matched() + crossed(); }
  Count singles() const { return s1 + s2; }

  Count& coincidence(int s, int t) {
    return s == 0 ? (t == 0 ? s1t1 : s1t2) : (t == 0 ? s2t1 : s2t2);
  }
  Count coincidence(int s, int t) const {
    return s == 0 ? (t == 0 ? s1t1 : s1t2) : (t == 0 ? s2t1 : s2t2);
  }

  DetectorCounts& operator+=(const DetectorCounts& o) {
    s1t1 += o.s1t1;
    s1t2 += o.s1t2;
    s2t1 += o.s2t1;
    s2t2 += o.s2t2;
    s1 += o.s1;
    s2 += o.s2;
    return *this;
  }
  friend bool operator==(const DetectorCounts&, const DetectorCounts&) = default;
};

// One block of data taking: analyzer setting, storage time and trial count.
struct SettingBlock {
  PolarizationSetting setting;
  double storage_time_s = 0.0;
  std::uint64_t n_trials = 0;
};

inline constexpr double kAngleMatchTolerance = 1e-9;

/// Counts indexed by (setting block, channel). Count is std::uint64_t for
/// sampled data and double for noiseless expected counts.
template <class Count>
class BasicCoincidenceTable {
 public:
  BasicCoincidenceTable() = default;
  explicit BasicCoincidenceTable(int channel_count) : channel_count_(channel_count) {
    if (channel_count < 1) throw DomainError("coincidence table needs >= 1 channel");
  }

  int channel_count() const noexcept { return channel_count_; }
  std::size_t setting_count() const noexcept { return blocks_.size(); }
  const std::vector<SettingBlock>& blocks() const noexcept { return blocks_; }
  const SettingBlock& block(std::size_t id) const { return blocks_.at(id); }

  std::size_t add_setting(const SettingBlock& block) {
    blocks_.push_back(block);
    counts_.resize(blocks_.size() * static_cast<std::size_t>(channel_count_));
    return blocks_.size() - 1;
  }

  // channel is 1-based.
  DetectorCounts<Count>& at(std::size_t setting_id, int channel) {
    return counts_.at(index(setting_id, channel));
  }
  const DetectorCounts<Count>& at(std::size_t setting_id, int channel) const {
    return counts_.at(index(setting_id, channel));
  }

  // Sum over the given channels (all channels when empty).
  DetectorCounts<Count> total(std::size_t setting_id, const std::vector<int>& channels = {}) const {
    DetectorCounts<Count> sum;
    if (channels.empty()) {
      for (int c = 1; c <= channel_count_; ++c) sum += at(setting_id, c);
    } else {
      for (int c : channels) sum += at(setting_id, c);
    }
    return sum;
  }

  // Ids of every block with linear analyzer angles (theta_s, theta_t),
  // optionally restricted to one storage time.
  std::vector<std::size_t> find_angles(double theta_s, double theta_t,
                                       std::optional<double> storage_time_s = {}) const {
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const auto& b = blocks_[i];
      if (!b.setting.is_angles()) continue;
      if (std::abs(b.setting.theta_s() - theta_s) > kAngleMatchTolerance) continue;
      if (std::abs(b.setting.theta_t() - theta_t) > kAngleMatchTolerance) continue;
      if (storage_time_s && std::abs(b.storage_time_s - *storage_time_s) > 1e-12) continue;
      ids.push_back(i);
    }
    return ids;
  }

  std::vector<std::size_t> find_basis(BasisLabel x, BasisLabel y,
                                      std::optional<double> storage_time_s = {}) const {
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const auto& b = blocks_[i];
      if (b.setting.is_angles() || b.setting.x() != x || b.setting.y() != y) continue;
      if (storage_time_s && std::abs(b.storage_time_s - *storage_time_s) > 1e-12) continue;
      ids.push_back(i);
    }
    return ids;
  }

  // Element-wise sum of a table with the same block layout.
  BasicCoincidenceTable& merge(const BasicCoincidenceTable& other) {
    if (other.channel_count_ != channel_count_ || other.blocks_.size() != blocks_.size()) {
      throw DomainError("cannot merge coincidence tables with different layouts");
    }
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    return *this;
  }

  // Applies f to every count (used by the bootstrap resampler).
  template <class F>
  auto transform_counts(F&& f) const {
    using Out = decltype(f(Count{}));
    BasicCoincidenceTable<Out> out(channel_count_);
    for (const auto& b : blocks_) out.add_setting(b);
    for (std::size_t s = 0; s < blocks_.size(); ++s) {
      for (int c = 1; c <= channel_count_; ++c) {
        const auto& in = at(s, c);
        auto& o = out.at(s, c);
        o.s1t1 = f(in.s1t1);
        o.s1t2 = f(in.s1t2);
        o.s2t1 = f(in.s2t1);
        o.s2t2 = f(in.s2t2);
        o.s1 = f(in.s1);
        o.s2 = f(in.s2);
      }
    }
    return out;
  }

  bool operator==(const BasicCoincidenceTable& o) const {
    if (channel_count_ != o.channel_count_ || counts_ != o.counts_) return false;
    if (blocks_.size() != o.blocks_.size()) return false;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      if (!(blocks_[i].setting == o.blocks_[i].setting) ||
          blocks_[i].storage_time_s != o.blocks_[i].storage_time_s ||
          blocks_[i].n_trials != o.blocks_[i].n_trials) {
        return false;
      }
    }
    return true;
  }

 private:
  std::size_t index(std::size_t setting_id, int channel) const {
    if (setting_id >= blocks_.size()) throw DomainError("setting id out of range");
    if (channel < 1 || channel > channel_count_) throw DomainError("channel out of range");
    return setting_id * static_cast<std::size_t>(channel_count_) +
           static_cast<std::size_t>(channel - 1);
  }

  int channel_count_ = 1;
  std::vector<SettingBlock> blocks_;
  std::vector<DetectorCounts<Count>> counts_;
};

using CoincidenceTable = BasicCoincidenceTable<std::uint64_t>;
using ExpectedCountTable = BasicCoincidenceTable<double>;

template <class Count>
ExpectedCountTable to_expected(const BasicCoincidenceTable<Count>& t) {
  return t.transform_counts([](Count c) { return static_cast<double>(c); });
}

}  // namespace mqi
