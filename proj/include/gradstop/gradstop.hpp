#pragma once

#include "gradstop/activation.hpp"
#include "gradstop/csv.hpp"
#include "gradstop/dataops.hpp"
#include "gradstop/dataset.hpp"
#include "gradstop/flow.hpp"
#include "gradstop/foe.hpp"
#include "gradstop/image.hpp"
#include "gradstop/parallel.hpp"
#include "gradstop/pgm.hpp"
#include "gradstop/quadrature.hpp"
#include "gradstop/rng.hpp"
#include "gradstop/spectral.hpp"
#include "gradstop/stopping.hpp"
#include "gradstop/toy2d.hpp"
#include "gradstop/train.hpp"
#include "gradstop/tvl2.hpp"
