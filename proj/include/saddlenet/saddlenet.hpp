#pragma once

#include <saddlenet/analysis.hpp>
#include <saddlenet/benchmark.hpp>
#include <saddlenet/common.hpp>
#include <saddlenet/copt.hpp>
#include <saddlenet/dynamics.hpp>
#include <saddlenet/graph.hpp>
#include <saddlenet/projection.hpp>
#include <saddlenet/quadratic.hpp>
#include <saddlenet/schedule.hpp>
