#pragma once

#include "hardylab/atoms.hpp"
#include "hardylab/czdecomp.hpp"
#include "hardylab/error.hpp"
#include "hardylab/experiments.hpp"
#include "hardylab/fft.hpp"
#include "hardylab/grid.hpp"
#include "hardylab/io.hpp"
#include "hardylab/maximal.hpp"
#include "hardylab/norms.hpp"
#include "hardylab/operators.hpp"
#include "hardylab/parallel.hpp"
#include "hardylab/rng.hpp"
#include "hardylab/weights.hpp"
#include "hardylab/whitney.hpp"
