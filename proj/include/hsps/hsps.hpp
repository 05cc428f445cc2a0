#pragma once

#include "hsps/cascade_sim.hpp"
#include "hsps/detector.hpp"
#include "hsps/emitter_model.hpp"
#include "hsps/errors.hpp"
#include "hsps/estimation.hpp"
#include "hsps/hardware_budget.hpp"
#include "hsps/herald_emulator.hpp"
#include "hsps/rng.hpp"
#include "hsps/serialize.hpp"
#include "hsps/timetag.hpp"
