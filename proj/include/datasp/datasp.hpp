#pragma once

#include "datasp/cost_model.hpp"
#include "datasp/engine.hpp"
#include "datasp/error.hpp"
#include "datasp/exclusion.hpp"
#include "datasp/graph.hpp"
#include "datasp/inference.hpp"
#include "datasp/io.hpp"
#include "datasp/oracle.hpp"
#include "datasp/shortest_paths.hpp"
#include "datasp/smooth_ops.hpp"
#include "datasp/synthetic.hpp"
#include "datasp/training.hpp"
#include "datasp/trajectory.hpp"
