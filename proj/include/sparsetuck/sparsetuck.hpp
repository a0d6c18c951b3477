// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "sparsetuck/model_io.hpp"
#include "sparsetuck/pruning.hpp"
#include "sparsetuck/report.hpp"
#include "sparsetuck/sparse_tensor.hpp"
#include "sparsetuck/synthetic.hpp"
#include "sparsetuck/trainer.hpp"
#include "sparsetuck/tucker_model.hpp"
#include "sparsetuck/updates.hpp"
