#pragma once

#include "tin/bench.hpp"
#include "tin/checkpoint.hpp"
#include "tin/config.hpp"
#include "tin/demo.hpp"
#include "tin/gradcheck.hpp"
#include "tin/interlace.hpp"
#include "tin/layers.hpp"
#include "tin/nets.hpp"
#include "tin/synth.hpp"
#include "tin/tcn.hpp"
#include "tin/tensor.hpp"
#include "tin/tin_block.hpp"
#include "tin/toy_net.hpp"
#include "tin/train.hpp"
