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

#ifndef R2I_GEMM_HPP_
#define R2I_GEMM_HPP_

namespace r2i {

// Row-major C = alpha * op(A) * op(B) + beta * C, dispatched to BLAS.
// Results are deterministic for a fixed thread count; we keep BLAS
// single-threaded by default (see set_blas_threads).
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc);

void set_blas_threads(int n);

}  // namespace r2i

#endif  // R2I_GEMM_HPP_
