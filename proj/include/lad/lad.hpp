#pragma once

#include "lad/errors.hpp"
#include "lad/rng.hpp"
#include "lad/parallel.hpp"
#include "lad/linalg.hpp"
#include "lad/data.hpp"
#include "lad/niw.hpp"
#include "lad/selector.hpp"
#include "lad/models.hpp"
#include "lad/baselines.hpp"
#include "lad/harness.hpp"
