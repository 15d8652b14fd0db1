#pragma once

#include "dyrecmul/datapath.hpp"
#include "dyrecmul/error_lab.hpp"
#include "dyrecmul/errors.hpp"
#include "dyrecmul/lut_fabric.hpp"
#include "dyrecmul/nn_io.hpp"
#include "dyrecmul/nn_sim.hpp"
#include "dyrecmul/report_format.hpp"
#include "dyrecmul/rounding.hpp"
#include "dyrecmul/version.hpp"
