#pragma once

#include "ell/amount.hpp"
#include "ell/cluster.hpp"
#include "ell/dbscan.hpp"
#include "ell/detect.hpp"
#include "ell/error.hpp"
#include "ell/explorer.hpp"
#include "ell/features.hpp"
#include "ell/ingest.hpp"
#include "ell/isolation_forest.hpp"
#include "ell/louvain.hpp"
#include "ell/metrics.hpp"
#include "ell/model.hpp"
#include "ell/pipeline.hpp"
#include "ell/preprocess.hpp"
#include "ell/random.hpp"
#include "ell/report.hpp"
#include "ell/synth.hpp"
