#pragma once

#include "analysis.hpp"
#include "basis.hpp"
#include "bessel.hpp"
#include "controller.hpp"
#include "grid.hpp"
#include "kernel_operator.hpp"
#include "kernels.hpp"
#include "norms.hpp"
#include "simulator.hpp"
#include "transforms.hpp"
