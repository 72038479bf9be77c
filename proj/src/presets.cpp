#include "qdcoh/presets.hpp"

#include "qdcoh/constants.hpp"

namespace qdcoh::presets {

phonon::PhononParams reference_phonons() {
    phonon::PhononParams p;
    p.alpha_la = 0.05;
    p.omega_c = mev_to_angular(4.5);
    p.s_loc = 0.02;
    p.omega_loc = mev_to_angular(0.6);
    p.sigma_loc = mev_to_angular(0.25);
    p.temperature = 3.9;
    return p;
}

phonon::EmitterParams reference_emitter() {
    phonon::EmitterParams e;
    e.omega0_mev = 1596.0;
    e.gamma_inhom = 0.01;
    e.gamma_hom = 1.0 / 11.8;
    return e;
}

spectra::CavityParams reference_cavity() {
    spectra::CavityParams c;
    c.omega_cav_mev = 1596.0;
    c.gamma_cav_mev = 1.75;
    c.a_cav = 1.75;
    return c;
}

std::vector<double> reference_detunings() { return {-9.15, -4.60, 0.00, 4.60, 8.92}; }

} // namespace qdcoh::presets
