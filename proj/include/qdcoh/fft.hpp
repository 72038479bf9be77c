#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace qdcoh::fft {

std::size_t next_pow2(std::size_t n);

/// In-place unnormalised transform with kernel e^{+2 pi i k n / N}
/// (FFTW_BACKWARD). Plans are created with FFTW_ESTIMATE so the result does
/// not depend on timing measurements.
void backward(std::vector<std::complex<double>>& data);

} // namespace qdcoh::fft
