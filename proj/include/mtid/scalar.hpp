#pragma once

namespace mtid {

// Training runs in double precision: the models are small enough that the
// halved SIMD width is affordable, and finite-difference checks stay tight.
using Scalar = double;

}  // namespace mtid
