#pragma once

#include "comfed/algorithms.hpp"
#include "comfed/client.hpp"
#include "comfed/config.hpp"
#include "comfed/data.hpp"
#include "comfed/grid.hpp"
#include "comfed/model.hpp"
#include "comfed/orchestrator.hpp"
#include "comfed/parallel.hpp"
#include "comfed/params.hpp"
#include "comfed/report.hpp"
#include "comfed/rng.hpp"
#include "comfed/server.hpp"
