#pragma once

#include "voxrag/audio.hpp"
#include "voxrag/clients.hpp"
#include "voxrag/config.hpp"
#include "voxrag/embedding.hpp"
#include "voxrag/engine.hpp"
#include "voxrag/error.hpp"
#include "voxrag/eval/harness.hpp"
#include "voxrag/eval/judge.hpp"
#include "voxrag/eval/metrics.hpp"
#include "voxrag/eval/prompts.hpp"
#include "voxrag/eval/stats.hpp"
#include "voxrag/generation.hpp"
#include "voxrag/hash.hpp"
#include "voxrag/http_clients.hpp"
#include "voxrag/index.hpp"
#include "voxrag/retrieval.hpp"
#include "voxrag/segmentation.hpp"
#include "voxrag/service.hpp"
#include "voxrag/store.hpp"
#include "voxrag/stubs.hpp"
