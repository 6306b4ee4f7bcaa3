#pragma once

namespace navlab::kernels {

// Kernel execution backend. Both backends compute every output element with
// the same operation order, so results are bitwise identical; only the work
// distribution differs. The OpenMP backend falls back to the serial path when
// called from inside an enclosing parallel region.
enum class Backend { serial, openmp };

Backend backend();
void set_backend(Backend b);

// True when the calling context may open a new parallel region.
bool parallel_ok();

int hardware_threads();

}  // namespace navlab::kernels
