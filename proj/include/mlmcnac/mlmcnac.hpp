#pragma once

#include "mlmcnac/actor_critic.hpp"
#include "mlmcnac/critic_state.hpp"
#include "mlmcnac/errors.hpp"
#include "mlmcnac/harness.hpp"
#include "mlmcnac/linrec.hpp"
#include "mlmcnac/mdp.hpp"
#include "mlmcnac/mdp_io.hpp"
#include "mlmcnac/mlmc.hpp"
#include "mlmcnac/oracle.hpp"
#include "mlmcnac/policy.hpp"
#include "mlmcnac/rng.hpp"
#include "mlmcnac/validate.hpp"
