#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrtsim/model.hpp"
#include "mrtsim/time.hpp"

namespace mrt {

enum class UnavailableReason : std::uint8_t {
  kDriving = 1 << 0,
  kNoConnection = 1 << 1,
  kInterventionOff = 1 << 2,
  kRecentlyWalking = 1 << 3,
};

std::string to_string(UnavailableReason r);
UnavailableReason unavailable_reason_from_string(const std::string& s);

// Small value-type set over the four reason codes.
class ReasonSet {
 public:
  ReasonSet() = default;

  void add(UnavailableReason r) { bits_ |= static_cast<std::uint8_t>(r); }
  bool contains(UnavailableReason r) const { return bits_ & static_cast<std::uint8_t>(r); }
  bool empty() const { return bits_ == 0; }
  int size() const;
  std::uint8_t bits() const { return bits_; }
  static ReasonSet from_bits(std::uint8_t bits) {
    ReasonSet s;
    s.bits_ = bits & 0x0F;
    return s;
  }

  std::vector<UnavailableReason> values() const;
  // Stable "|"-joined string names; "NONE" for the empty set.
  std::string joined() const;
  static ReasonSet from_joined(const std::string& text);

  bool operator==(const ReasonSet&) const = default;

 private:
  std::uint8_t bits_ = 0;
};

struct AvailabilityResult {
  bool available = true;
  ReasonSet reasons;
  UtcSeconds evaluated_at = 0;
};

struct SnoozeState {
  bool active = false;
  UtcSeconds expires_at = 0;

  static constexpr std::int64_t kMaxDurationSeconds = 12 * 3600;

  // Activates for min(duration, 12h) from `now`.
  static SnoozeState set(UtcSeconds now, std::int64_t duration_seconds);
  bool in_effect(UtcSeconds now) const { return active && now < expires_at; }
};

struct AvailabilityPolicy {
  std::int64_t freshness_bound_seconds = 45 * 60;
  std::int64_t walking_lookback_seconds = 90;
};

// Protocolized availability: each violated criterion contributes its reason
// code. A snapshot older than the freshness bound counts as a failed capture
// and maps to NO_CONNECTION (conservative), as does CAPTIVE_PORTAL.
AvailabilityResult evaluate_availability(const ContextSnapshot& snapshot, const SnoozeState& snooze,
                                         UtcSeconds now, const AvailabilityPolicy& policy = {});

}  // namespace mrt
