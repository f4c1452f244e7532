#pragma once

// Umbrella header.

#include "urq/core.hpp"
#include "urq/kernels.hpp"
#include "urq/matrix2.hpp"
#include "urq/spectral.hpp"
#include "urq/harmonic_twist.hpp"
#include "urq/qbd.hpp"
#include "urq/rng.hpp"
#include "urq/asymptotics.hpp"
#include "urq/simulate.hpp"
#include "urq/io.hpp"
#include "urq/verify.hpp"
