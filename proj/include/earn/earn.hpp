#pragma once

#include "earn/autodiff.hpp"
#include "earn/box.hpp"
#include "earn/checkpoint.hpp"
#include "earn/config.hpp"
#include "earn/dataset.hpp"
#include "earn/entity.hpp"
#include "earn/eval.hpp"
#include "earn/grounding.hpp"
#include "earn/lang_encoder.hpp"
#include "earn/model.hpp"
#include "earn/nn.hpp"
#include "earn/reconstruct.hpp"
#include "earn/synth.hpp"
#include "earn/train.hpp"
#include "earn/visual_encoder.hpp"
