#pragma once

#include "agl.hpp"
#include "attention.hpp"
#include "checkpoint.hpp"
#include "config.hpp"
#include "dataset_io.hpp"
#include "embedding.hpp"
#include "graph.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "normalization.hpp"
#include "optim.hpp"
#include "params.hpp"
#include "simulator.hpp"
#include "tensor.hpp"
#include "train.hpp"
#include "world.hpp"
