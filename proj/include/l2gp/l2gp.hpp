#ifndef L2GP_L2GP_HPP_
#define L2GP_L2GP_HPP_

#include "l2gp/adapt.hpp"
#include "l2gp/autodiff.hpp"
#include "l2gp/checkpoint.hpp"
#include "l2gp/config.hpp"
#include "l2gp/data.hpp"
#include "l2gp/error.hpp"
#include "l2gp/gradcheck.hpp"
#include "l2gp/harness.hpp"
#include "l2gp/metrics.hpp"
#include "l2gp/model.hpp"
#include "l2gp/nn_ops.hpp"
#include "l2gp/optimizer.hpp"
#include "l2gp/random.hpp"
#include "l2gp/reference.hpp"
#include "l2gp/tensor.hpp"
#include "l2gp/trainer.hpp"

#endif  // L2GP_L2GP_HPP_
