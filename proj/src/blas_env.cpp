#include <cstdlib>

// OpenBLAS picks its kernel set from OPENBLAS_CORETYPE at first use.  The
// auto-detection on this VM lands on a generic kernel at roughly half the
// attainable GEMM throughput, so pin a known-good kernel before the (static)
// library initialises.  Priority 101 runs ahead of default-priority
// constructors; setenv with overwrite=0 keeps any user-provided choice.
__attribute__((constructor(101))) static void pdx_pin_blas_env() {
  setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
  setenv("OPENBLAS_NUM_THREADS", "1", 0);
}
