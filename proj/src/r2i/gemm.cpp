// Copyright (c) the r2i project authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "r2i/gemm.hpp"

#include <cblas.h>
#include <cpuid.h>

#include <cstdlib>

extern "C" void openblas_set_num_threads(int);

namespace r2i {
namespace {

bool os_saves_zmm_state() {
  unsigned eax, ebx, ecx, edx;
  if (!__get_cpuid(1, &eax, &ebx, &ecx, &edx)) return false;
  if (!(ecx & (1u << 27))) return false;  // OSXSAVE
  unsigned lo, hi;
  __asm__ volatile("xgetbv" : "=a"(lo), "=d"(hi) : "c"(0));
  return (lo & 0xE6u) == 0xE6u;  // XMM, YMM, opmask and ZMM state
}

// OpenBLAS's DYNAMIC_ARCH model lookup can miss virtualized CPUs and fall
// back to its slowest kernel. Selecting the core by feature flags must
// happen before the library constructor runs, hence constructor(101) and a
// static link. Explicit OPENBLAS_* variables in the environment win.
// Threading starts pinned to one worker; set_blas_threads widens it later.
__attribute__((constructor(101))) void select_blas_core() {
  setenv("OPENBLAS_NUM_THREADS", "1", 0);
  unsigned eax, ebx, ecx, edx;
  if (!__get_cpuid_count(7, 0, &eax, &ebx, &ecx, &edx)) return;
  const bool avx512 = (ebx & (1u << 16)) && (ebx & (1u << 17)) &&
                      (ebx & (1u << 30)) && (ebx & (1u << 31));
  const bool avx2 = (ebx & (1u << 5)) != 0;
  if (avx512 && os_saves_zmm_state()) {
    setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
  } else if (avx2) {
    setenv("OPENBLAS_CORETYPE", "HASWELL", 0);
  }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

void set_blas_threads(int n) { openblas_set_num_threads(n > 0 ? n : 1); }

}  // namespace r2i
