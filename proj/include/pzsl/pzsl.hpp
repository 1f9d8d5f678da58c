#pragma once

#include "pzsl/array.hpp"
#include "pzsl/checkpoint.hpp"
#include "pzsl/disambiguation.hpp"
#include "pzsl/embedding_io.hpp"
#include "pzsl/error.hpp"
#include "pzsl/gradcheck.hpp"
#include "pzsl/gradcheck_suite.hpp"
#include "pzsl/model.hpp"
#include "pzsl/ops.hpp"
#include "pzsl/optim.hpp"
#include "pzsl/parallel.hpp"
#include "pzsl/partial_labels.hpp"
#include "pzsl/rng.hpp"
#include "pzsl/tensor.hpp"
#include "pzsl/train.hpp"
