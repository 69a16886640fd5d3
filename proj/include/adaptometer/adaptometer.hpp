#pragma once

#include "adaptometer/corpus.hpp"
#include "adaptometer/divergence.hpp"
#include "adaptometer/error.hpp"
#include "adaptometer/genconv.hpp"
#include "adaptometer/glmm.hpp"
#include "adaptometer/pipeline.hpp"
#include "adaptometer/sampling.hpp"
#include "adaptometer/synth.hpp"
#include "adaptometer/treebank.hpp"
