#pragma once

#include "lowdiff/autodiff.hpp"
#include "lowdiff/cascade.hpp"
#include "lowdiff/cli.hpp"
#include "lowdiff/config.hpp"
#include "lowdiff/dataset.hpp"
#include "lowdiff/gradcheck.hpp"
#include "lowdiff/metrics.hpp"
#include "lowdiff/network.hpp"
#include "lowdiff/ops.hpp"
#include "lowdiff/optimizer.hpp"
#include "lowdiff/oracle.hpp"
#include "lowdiff/rng.hpp"
#include "lowdiff/schedule.hpp"
#include "lowdiff/serialize.hpp"
#include "lowdiff/tensor.hpp"
