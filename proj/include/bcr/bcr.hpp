#pragma once

#include "bcr/corpus.hpp"
#include "bcr/error.hpp"
#include "bcr/eval_harness.hpp"
#include "bcr/extraction.hpp"
#include "bcr/grouping.hpp"
#include "bcr/grpo.hpp"
#include "bcr/manifest.hpp"
#include "bcr/parallel.hpp"
#include "bcr/policy.hpp"
#include "bcr/probe.hpp"
#include "bcr/reward.hpp"
#include "bcr/seed.hpp"
#include "bcr/sim_env.hpp"
#include "bcr/stub_server.hpp"
#include "bcr/verification.hpp"
