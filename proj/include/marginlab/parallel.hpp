#pragma once

namespace marginlab {

// Batch kernels come in two flavours: a plain serial loop kept as the
// reference implementation, and an OpenMP loop that fills per-item slots
// and reduces in fixed index order. Both produce bit-identical results,
// which the tests assert; the benchmark tool compares their throughput.
enum class ExecMode {
  kSerial,
  kParallel,
};

// Number of threads the parallel mode will use (1 when built without OpenMP).
int max_threads();

}  // namespace marginlab
