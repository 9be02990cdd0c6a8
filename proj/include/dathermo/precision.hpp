#pragma once

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/eigen.hpp>

namespace dathermo {

/// 100 significant decimal digits. Used where chaotic growth (lambda_u^n with
/// n ~ 100) makes double-precision audits meaningless.
using HighPrecision = boost::multiprecision::cpp_bin_float_100;

/// 50 decimal digits with a binary exponent range wide enough for e^-10^4.
using Precise50 = boost::multiprecision::cpp_bin_float_50;

}  // namespace dathermo
