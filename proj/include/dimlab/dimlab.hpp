#pragma once

#include "dimlab/error.hpp"
#include "dimlab/tensor.hpp"
#include "dimlab/autodiff.hpp"
#include "dimlab/penalty.hpp"
#include "dimlab/models.hpp"
#include "dimlab/data.hpp"
#include "dimlab/trainer.hpp"
#include "dimlab/experiment.hpp"
