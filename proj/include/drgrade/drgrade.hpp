#pragma once

#include "drgrade/error.hpp"
#include "drgrade/rng.hpp"
#include "drgrade/tensor.hpp"
#include "drgrade/layers.hpp"
#include "drgrade/backbone.hpp"
#include "drgrade/optim.hpp"
#include "drgrade/objectives.hpp"
#include "drgrade/metrics.hpp"
#include "drgrade/preprocess.hpp"
#include "drgrade/augment.hpp"
#include "drgrade/sampling.hpp"
#include "drgrade/fusion.hpp"
#include "drgrade/image_io.hpp"
#include "drgrade/dataset.hpp"
#include "drgrade/pipeline.hpp"
#include "drgrade/ensemble.hpp"
#include "drgrade/config.hpp"
#include "drgrade/checkpoint.hpp"
#include "drgrade/svg.hpp"
#include "drgrade/harness.hpp"
