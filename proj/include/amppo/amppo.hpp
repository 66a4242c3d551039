#pragma once

// Umbrella header for the AM-PPO library.

#include "amppo/checkpoint.hpp"
#include "amppo/config.hpp"
#include "amppo/envs.hpp"
#include "amppo/errors.hpp"
#include "amppo/modulation.hpp"
#include "amppo/numcore.hpp"
#include "amppo/replay.hpp"
#include "amppo/rng.hpp"
#include "amppo/rollout.hpp"
#include "amppo/run.hpp"
#include "amppo/trainer.hpp"
#include "amppo/update.hpp"
