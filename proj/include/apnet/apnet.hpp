#pragma once
// Umbrella header.

#include "apnet/attention.hpp"
#include "apnet/checkpoint.hpp"
#include "apnet/dataset.hpp"
#include "apnet/gradcheck.hpp"
#include "apnet/gradcheck_suite.hpp"
#include "apnet/image_io.hpp"
#include "apnet/metrics.hpp"
#include "apnet/mls.hpp"
#include "apnet/model.hpp"
#include "apnet/ops.hpp"
#include "apnet/spp.hpp"
#include "apnet/tensor.hpp"
#include "apnet/trainer.hpp"
