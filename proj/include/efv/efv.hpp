#pragma once

#include "efv/cache.hpp"
#include "efv/checkpoint.hpp"
#include "efv/config.hpp"
#include "efv/dataset.hpp"
#include "efv/error.hpp"
#include "efv/event_io.hpp"
#include "efv/gradcheck.hpp"
#include "efv/model.hpp"
#include "efv/nn.hpp"
#include "efv/ops.hpp"
#include "efv/plot.hpp"
#include "efv/random.hpp"
#include "efv/representations.hpp"
#include "efv/synthetic.hpp"
#include "efv/tensor.hpp"
#include "efv/training.hpp"
#include "efv/voxel_graph.hpp"
