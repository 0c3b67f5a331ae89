#pragma once

#include "bitpack.hpp"
#include "corpus.hpp"
#include "errors.hpp"
#include "evaluate.hpp"
#include "fcn.hpp"
#include "kmeans.hpp"
#include "metrics.hpp"
#include "model_io.hpp"
#include "parallel.hpp"
#include "pipeline.hpp"
#include "pruning.hpp"
#include "quantization.hpp"
#include "rng.hpp"
#include "text.hpp"
#include "train.hpp"
#include "waveform.hpp"
