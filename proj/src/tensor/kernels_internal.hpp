#pragma once

#include "evtrack/kernels.hpp"

namespace evtrack::kernels {

void validate_deform(const Tensor& x, const Tensor& offsets, const Tensor& weight, const Tensor* bias,
                     const ConvGeometry& g);

}  // namespace evtrack::kernels
