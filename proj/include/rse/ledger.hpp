#pragma once

#include <cstdint>
#include <optional>

namespace rse::eval {

// Per-iteration token accounting, split into the distillation phase and the
// reasoning (solver) phase. Totals are accessors so the identity
// t_in == distill_in + reason_in holds by construction.
struct TokenLedger {
  int round = 0;
  std::int64_t distill_in = 0;
  std::int64_t distill_out = 0;
  std::int64_t reason_in = 0;
  std::int64_t reason_out = 0;
  std::optional<double> flops;

  std::int64_t t_in() const { return distill_in + reason_in; }
  std::int64_t t_out() const { return distill_out + reason_out; }

  // flops = factor * params * (t_in + t_out); factor 2 approximates one
  // multiply-accumulate per parameter per token.
  TokenLedger& set_flops(double params, double factor = 2.0) {
    flops = factor * params * static_cast<double>(t_in() + t_out());
    return *this;
  }

  TokenLedger& operator+=(const TokenLedger& other) {
    distill_in += other.distill_in;
    distill_out += other.distill_out;
    reason_in += other.reason_in;
    reason_out += other.reason_out;
    if (other.flops) flops = flops.value_or(0.0) + *other.flops;
    return *this;
  }
};

}  // namespace rse::eval
