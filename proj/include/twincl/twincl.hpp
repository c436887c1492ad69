#pragma once

#include "twincl/augmentation.hpp"
#include "twincl/config.hpp"
#include "twincl/encoder.hpp"
#include "twincl/error.hpp"
#include "twincl/eval.hpp"
#include "twincl/io.hpp"
#include "twincl/memory_queue.hpp"
#include "twincl/numeric.hpp"
#include "twincl/objective.hpp"
#include "twincl/rng.hpp"
#include "twincl/synth.hpp"
#include "twincl/training.hpp"
