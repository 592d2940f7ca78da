#ifndef SHADE_SHADE_HPP
#define SHADE_SHADE_HPP

#include "shade/baseline_regularizer.hpp"
#include "shade/checkpoint.hpp"
#include "shade/data/dataset.hpp"
#include "shade/data/idx.hpp"
#include "shade/data/synthetic.hpp"
#include "shade/experiment/commands.hpp"
#include "shade/experiment/config.hpp"
#include "shade/experiment/trainer.hpp"
#include "shade/experiment/verify.hpp"
#include "shade/info/discrete.hpp"
#include "shade/info/estimators.hpp"
#include "shade/info/monitor.hpp"
#include "shade/info/reconstruction.hpp"
#include "shade/layers.hpp"
#include "shade/network.hpp"
#include "shade/optimizer.hpp"
#include "shade/rng.hpp"
#include "shade/shade_regularizer.hpp"
#include "shade/tensor.hpp"

#endif  // SHADE_SHADE_HPP
