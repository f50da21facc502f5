#pragma once

#include <cmath>
#include <string>

#include "plmkit/common.hpp"

namespace plmkit::nn {

enum class ScheduleKind {
  LinearWarmupConstant,
  LinearWarmupLinearDecay,
  InverseSqrt,
};

inline const char* schedule_name(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::LinearWarmupConstant: return "linear-warmup-constant";
    case ScheduleKind::LinearWarmupLinearDecay: return "linear-warmup-linear-decay";
    case ScheduleKind::InverseSqrt: return "inverse-sqrt";
  }
  return "?";
}

inline ScheduleKind schedule_from_name(const std::string& s) {
  if (s == "linear-warmup-constant") return ScheduleKind::LinearWarmupConstant;
  if (s == "linear-warmup-linear-decay") return ScheduleKind::LinearWarmupLinearDecay;
  if (s == "inverse-sqrt") return ScheduleKind::InverseSqrt;
  throw ContractError("unknown schedule kind: " + s);
}

struct Schedule {
  ScheduleKind kind = ScheduleKind::InverseSqrt;
  long warmup_steps = 0;
  double peak_lr = 0.0;
  long total_steps = 0;  // used by the linear-decay variant
};

// Learning rate at a step. All kinds warm up linearly from zero over
// warmup_steps; what follows depends on the kind.
inline double schedule_at(const Schedule& s, long step) {
  if (step < 0) throw ContractError("schedule_at: negative step");
  if (s.warmup_steps <= 0)
    throw ContractError("schedule_at: warm-up schedules need warmup_steps >= 1");
  if (step <= s.warmup_steps)
    return s.peak_lr * double(step) / double(s.warmup_steps);
  switch (s.kind) {
    case ScheduleKind::LinearWarmupConstant:
      return s.peak_lr;
    case ScheduleKind::LinearWarmupLinearDecay: {
      if (s.total_steps <= s.warmup_steps)
        throw ContractError("schedule_at: total_steps must exceed warmup_steps");
      if (step >= s.total_steps) return 0.0;
      return s.peak_lr * double(s.total_steps - step) /
             double(s.total_steps - s.warmup_steps);
    }
    case ScheduleKind::InverseSqrt:
      return s.peak_lr * std::sqrt(double(s.warmup_steps) / double(step));
  }
  throw ContractError("unknown schedule kind");
}

}  // namespace plmkit::nn
