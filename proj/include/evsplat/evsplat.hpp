#pragma once

#include "evsplat/camera.hpp"
#include "evsplat/core.hpp"
#include "evsplat/evaluation.hpp"
#include "evsplat/event_frontend.hpp"
#include "evsplat/gaussian_map.hpp"
#include "evsplat/geometry.hpp"
#include "evsplat/image_io.hpp"
#include "evsplat/image_ops.hpp"
#include "evsplat/jacobians.hpp"
#include "evsplat/motion_model.hpp"
#include "evsplat/ply_io.hpp"
#include "evsplat/rasterizer.hpp"
#include "evsplat/simulator.hpp"
#include "evsplat/tracker.hpp"
#include "evsplat/trajectory.hpp"
