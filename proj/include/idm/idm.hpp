#pragma once

// Umbrella header: the whole library.

#include "idm/autodiff.hpp"
#include "idm/checkpoint.hpp"
#include "idm/config.hpp"
#include "idm/data.hpp"
#include "idm/evaluation.hpp"
#include "idm/inference.hpp"
#include "idm/model.hpp"
#include "idm/networks.hpp"
#include "idm/params.hpp"
#include "idm/rng.hpp"
#include "idm/schedule.hpp"
#include "idm/svg.hpp"
#include "idm/tensor.hpp"
#include "idm/training.hpp"
