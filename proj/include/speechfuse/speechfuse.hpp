#pragma once

// Umbrella header for the whole library.

#include "speechfuse/audio.hpp"
#include "speechfuse/cli.hpp"
#include "speechfuse/common.hpp"
#include "speechfuse/corpus.hpp"
#include "speechfuse/dsp.hpp"
#include "speechfuse/embed.hpp"
#include "speechfuse/eval.hpp"
#include "speechfuse/feature.hpp"
#include "speechfuse/fusion.hpp"
#include "speechfuse/nn.hpp"
#include "speechfuse/plot.hpp"
#include "speechfuse/shallow.hpp"
#include "speechfuse/transfer.hpp"
