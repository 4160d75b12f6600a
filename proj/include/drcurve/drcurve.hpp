#pragma once

#include "drcurve/basis.hpp"
#include "drcurve/dgp.hpp"
#include "drcurve/error.hpp"
#include "drcurve/hoif.hpp"
#include "drcurve/kernels.hpp"
#include "drcurve/local_poly.hpp"
#include "drcurve/log.hpp"
#include "drcurve/nuisance.hpp"
#include "drcurve/projection.hpp"
#include "drcurve/pseudo_dr.hpp"
#include "drcurve/quadrature.hpp"
#include "drcurve/rates.hpp"
#include "drcurve/sample.hpp"
#include "drcurve/sensitivity.hpp"
#include "drcurve/series.hpp"
#include "drcurve/sim.hpp"
#include "drcurve/truncnorm.hpp"
#include "drcurve/u_statistic.hpp"
