#pragma once

#include "lorm/common.hpp"
#include "lorm/signal_io.hpp"
#include "lorm/stream.hpp"
#include "lorm/tokenizer.hpp"
#include "lorm/sequence.hpp"
#include "lorm/model.hpp"
#include "lorm/transformer.hpp"
#include "lorm/train.hpp"
#include "lorm/checkpoint.hpp"
#include "lorm/monitor.hpp"
#include "lorm/eval.hpp"
#include "lorm/synth.hpp"
#include "lorm/config.hpp"
#include "lorm/pipeline.hpp"
