#pragma once

#include "dprp/tensor.hpp"

namespace dprp {

// Thin SVD A = U diag(sigma) V^T with r = min(h, w). Columns of U and V are
// orthonormal, sigma is descending and non-negative, and the largest-magnitude
// entry of each U column is non-negative (sign convention for reproducibility).
struct SvdResult {
    Tensor U;      // h x r
    Tensor sigma;  // length r
    Tensor V;      // w x r
};

SvdResult svd(const Tensor& a);

}  // namespace dprp
