#pragma once

#include <vector>

#include "qdcoh/phonon.hpp"
#include "qdcoh/spectra.hpp"

namespace qdcoh::presets {

/// Phonon parameters chosen to reproduce the reported sideband shape
/// (broad LA continuum, weak local mode 0.6 meV from the ZPL) at 3.9 K.
phonon::PhononParams reference_phonons();
/// ZPL at 1.596 eV; homogeneous rate set by the 11.8 ps coherence time.
phonon::EmitterParams reference_emitter();
/// 3.5 meV FWHM cavity centred on the ZPL.
spectra::CavityParams reference_cavity();
std::vector<double> reference_detunings();

} // namespace qdcoh::presets
