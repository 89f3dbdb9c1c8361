#pragma once

#include "bodyfit/body_model.hpp"
#include "bodyfit/common.hpp"
#include "bodyfit/fitter.hpp"
#include "bodyfit/gps_encoding.hpp"
#include "bodyfit/heatmap.hpp"
#include "bodyfit/interior_deform.hpp"
#include "bodyfit/losses.hpp"
#include "bodyfit/metrics.hpp"
#include "bodyfit/parallel.hpp"
#include "bodyfit/rotation.hpp"
#include "bodyfit/shape_solver.hpp"
#include "bodyfit/synthetic.hpp"
#include "bodyfit/tet_mesh.hpp"
#include "bodyfit/toy_model.hpp"
