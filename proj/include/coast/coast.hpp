#pragma once

#include "coast/baselines.hpp"
#include "coast/config.hpp"
#include "coast/cross_round.hpp"
#include "coast/error.hpp"
#include "coast/experiment.hpp"
#include "coast/flengine.hpp"
#include "coast/model.hpp"
#include "coast/params.hpp"
#include "coast/prune.hpp"
#include "coast/random.hpp"
#include "coast/ranking.hpp"
#include "coast/report.hpp"
#include "coast/scoreboard.hpp"
#include "coast/snapshot.hpp"
#include "coast/synthdata.hpp"
