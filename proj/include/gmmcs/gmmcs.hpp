#pragma once

#include "gmmcs/error.hpp"
#include "gmmcs/random.hpp"
#include "gmmcs/core_models.hpp"
#include "gmmcs/posterior.hpp"
#include "gmmcs/info_metrics.hpp"
#include "gmmcs/kernel_design.hpp"
#include "gmmcs/online_design.hpp"
#include "gmmcs/image.hpp"
#include "gmmcs/em.hpp"
#include "gmmcs/pipeline.hpp"
#include "gmmcs/model_io.hpp"
