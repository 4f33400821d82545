#pragma once

// Umbrella header.

#include "xrdl/autodiff.hpp"
#include "xrdl/checkpoint.hpp"
#include "xrdl/cli.hpp"
#include "xrdl/config.hpp"
#include "xrdl/data.hpp"
#include "xrdl/error.hpp"
#include "xrdl/gradient_check.hpp"
#include "xrdl/history.hpp"
#include "xrdl/image.hpp"
#include "xrdl/kernels.hpp"
#include "xrdl/metrics.hpp"
#include "xrdl/model.hpp"
#include "xrdl/model_zoo.hpp"
#include "xrdl/rng.hpp"
#include "xrdl/synthetic.hpp"
#include "xrdl/tensor.hpp"
#include "xrdl/tensor_io.hpp"
#include "xrdl/train.hpp"
