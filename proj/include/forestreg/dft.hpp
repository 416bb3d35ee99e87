#pragma once

#include <vector>

#include "forestreg/common.hpp"

namespace forestreg {

// Unnormalized forward 2-D DFT of a real H x W image:
//   F[u,v] = sum_{r,c} x[r,c] * exp(-2*pi*i*(u*r/H + v*c/W)).
// Row-column decomposition in double precision.
void dft2(const double* x, int h, int w, double* re, double* im);

// Inverse: x[r,c] = (1/(H*W)) * sum F[u,v] * exp(+2*pi*i*...), real part.
void idft2(const double* re, const double* im, int h, int w, double* x);

// Adjoint applied to a cotangent (g_re, g_im) of the forward transform:
// returns d/dx of any scalar whose frequency-space gradient is given, i.e.
// out[r,c] = sum_{u,v} g_re*cos(2*pi*phi) - g_im*sin(2*pi*phi).
void dft2_adjoint(const double* g_re, const double* g_im, int h, int w, double* out);

}  // namespace forestreg
