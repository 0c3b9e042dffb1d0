#pragma once

#include <cstdint>

#include "stars/types.hpp"

namespace stars {

enum class AngleAxis { kAzimuth, kElevation };

/// UPA steering vector of the surface. Element n (1-based) has phase
/// pi * [ nbar*cos(el)*sin(az) + (n-1-Nh*nbar)*sin(el) ], nbar = floor((n-1)/Nh).
VectorXcd steering(const Angles& angles, int n_vertical, int n_horizontal);

/// Analytic derivative of `steering` with respect to one angle; returns the
/// elementwise product of the steering vector with the phase-rate factors.
VectorXcd steering_derivative(const Angles& angles, int n_vertical,
                              int n_horizontal, AngleAxis wrt);

/// Half-wavelength ULA response at the BS, e^{j pi (m-1) sin(bearing)}.
VectorXcd bs_ula_steering(int n_antennas, double bearing_rad);

/// Draws one Rician realization of all channels; deterministic per seed.
ChannelSet synthesize_channels(const SystemConfig& config, std::uint64_t seed);

/// sqrt(L0 * d^-alpha): linear amplitude path-loss factor.
double path_loss_amplitude(double l0, double distance_m, double exponent);

}  // namespace stars
