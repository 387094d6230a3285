#pragma once

#include "ksamp/error.hpp"
#include "ksamp/linalg.hpp"
#include "ksamp/dictionary.hpp"
#include "ksamp/operator.hpp"
#include "ksamp/kernels.hpp"
#include "ksamp/density.hpp"
#include "ksamp/sampler.hpp"
#include "ksamp/dynamics.hpp"
#include "ksamp/analysis.hpp"
#include "ksamp/io.hpp"
#include "ksamp/pipeline.hpp"
