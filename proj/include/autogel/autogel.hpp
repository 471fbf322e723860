#pragma once

#include "autogel/adam.hpp"
#include "autogel/config.hpp"
#include "autogel/datasets.hpp"
#include "autogel/diagnostics.hpp"
#include "autogel/errors.hpp"
#include "autogel/gradcheck.hpp"
#include "autogel/graph.hpp"
#include "autogel/link_data.hpp"
#include "autogel/metrics.hpp"
#include "autogel/ops.hpp"
#include "autogel/random.hpp"
#include "autogel/search.hpp"
#include "autogel/search_space.hpp"
#include "autogel/supernet.hpp"
#include "autogel/tasks.hpp"
#include "autogel/tensor.hpp"
