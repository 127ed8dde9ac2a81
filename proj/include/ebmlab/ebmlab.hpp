#pragma once

#include "ebmlab/checkpoint.hpp"
#include "ebmlab/config.hpp"
#include "ebmlab/data.hpp"
#include "ebmlab/diagnose.hpp"
#include "ebmlab/energy_model.hpp"
#include "ebmlab/errors.hpp"
#include "ebmlab/losses.hpp"
#include "ebmlab/net.hpp"
#include "ebmlab/optim.hpp"
#include "ebmlab/parallel.hpp"
#include "ebmlab/rng.hpp"
#include "ebmlab/samplers.hpp"
#include "ebmlab/trainer.hpp"
