#ifndef TOMALIGN_TOMALIGN_HPP
#define TOMALIGN_TOMALIGN_HPP

#include "tomalign/error.hpp"
#include "tomalign/geometry.hpp"
#include "tomalign/generation_params.hpp"
#include "tomalign/gateway.hpp"
#include "tomalign/http_backend.hpp"
#include "tomalign/judgement.hpp"
#include "tomalign/metaprompt.hpp"
#include "tomalign/profiles.hpp"
#include "tomalign/aligner.hpp"
#include "tomalign/store.hpp"
#include "tomalign/worker_pool.hpp"
#include "tomalign/pipeline.hpp"
#include "tomalign/replay.hpp"
#include "tomalign/server.hpp"

#endif  // TOMALIGN_TOMALIGN_HPP
