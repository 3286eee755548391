#pragma once

#include "tfdgqme/common.hpp"
#include "tfdgqme/config.hpp"
#include "tfdgqme/dense.hpp"
#include "tfdgqme/gqme.hpp"
#include "tfdgqme/krylov.hpp"
#include "tfdgqme/ksl.hpp"
#include "tfdgqme/model.hpp"
#include "tfdgqme/pfi.hpp"
#include "tfdgqme/series_io.hpp"
#include "tfdgqme/tensor_train.hpp"
#include "tfdgqme/tfd.hpp"
#include "tfdgqme/volterra.hpp"
