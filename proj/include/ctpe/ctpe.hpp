#pragma once

#include "ctpe/core_rand.hpp"
#include "ctpe/model.hpp"
#include "ctpe/features.hpp"
#include "ctpe/observe.hpp"
#include "ctpe/td.hpp"
#include "ctpe/learn.hpp"
#include "ctpe/stats.hpp"
#include "ctpe/parallel.hpp"
#include "ctpe/oracle.hpp"
#include "ctpe/experiment.hpp"
#include "ctpe/checks.hpp"
