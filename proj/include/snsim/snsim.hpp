#pragma once

// Spin-noise spectroscopy toolkit: stochastic Faraday-rotation traces from an
// alkali vapor, balanced-polarimeter detection with coherent or squeezed
// probes, averaged PSD estimation, and Lorentzian line analysis.

#include "snsim/analysis.hpp"
#include "snsim/config.hpp"
#include "snsim/detection.hpp"
#include "snsim/errors.hpp"
#include "snsim/parallel.hpp"
#include "snsim/pipeline.hpp"
#include "snsim/quantum_optics.hpp"
#include "snsim/rng.hpp"
#include "snsim/spectral.hpp"
#include "snsim/spin_dynamics.hpp"
#include "snsim/time_trace.hpp"
