#pragma once

#include "qgs/common.hpp"
#include "qgs/vertex_conditions.hpp"
#include "qgs/graph_core.hpp"
#include "qgs/edge_solver.hpp"
#include "qgs/spectral.hpp"
#include "qgs/fem.hpp"
#include "qgs/greens.hpp"
#include "qgs/bs_metric.hpp"
#include "qgs/ensembles.hpp"
#include "qgs/io.hpp"
