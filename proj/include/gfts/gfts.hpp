#pragma once

#include "gfts/assemble.hpp"
#include "gfts/backtest.hpp"
#include "gfts/error.hpp"
#include "gfts/fpca.hpp"
#include "gfts/log.hpp"
#include "gfts/lrcov.hpp"
#include "gfts/panel.hpp"
#include "gfts/parallel.hpp"
#include "gfts/pipeline.hpp"
#include "gfts/reconcile.hpp"
#include "gfts/rng.hpp"
#include "gfts/scorecast.hpp"
#include "gfts/smoothing.hpp"
#include "gfts/structure.hpp"
#include "gfts/synthetic.hpp"
#include "gfts/text.hpp"
