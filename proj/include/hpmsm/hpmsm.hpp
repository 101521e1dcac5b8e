#pragma once

#include "hpmsm/analysis.hpp"
#include "hpmsm/arc_csv.hpp"
#include "hpmsm/circle.hpp"
#include "hpmsm/cosim.hpp"
#include "hpmsm/drive.hpp"
#include "hpmsm/hybrid_sim.hpp"
#include "hpmsm/identifier.hpp"
#include "hpmsm/matrosov.hpp"
#include "hpmsm/observer.hpp"
#include "hpmsm/plant.hpp"
#include "hpmsm/portrait.hpp"
#include "hpmsm/reduced.hpp"
#include "hpmsm/speed_profile.hpp"
