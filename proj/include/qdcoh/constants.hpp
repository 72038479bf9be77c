#pragma once

#include <numbers>

namespace qdcoh {

// Internal unit regime: energies at the boundary in meV, times in ps,
// angular frequencies in ps^-1.
inline constexpr double kHbarMeVps = 0.6582119569;  // meV * ps
inline constexpr double kBoltzmannMeVK = 0.08617333; // meV / K
inline constexpr double kPi = std::numbers::pi;

constexpr double mev_to_angular(double energy_mev) { return energy_mev / kHbarMeVps; }
constexpr double angular_to_mev(double omega) { return omega * kHbarMeVps; }

} // namespace qdcoh
