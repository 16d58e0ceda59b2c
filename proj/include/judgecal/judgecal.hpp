#pragma once

#include "judgecal/activation_store.hpp"
#include "judgecal/calibration.hpp"
#include "judgecal/error.hpp"
#include "judgecal/judge.hpp"
#include "judgecal/losses.hpp"
#include "judgecal/probe.hpp"
#include "judgecal/random.hpp"
#include "judgecal/report.hpp"
#include "judgecal/selective.hpp"
#include "judgecal/verdict.hpp"
