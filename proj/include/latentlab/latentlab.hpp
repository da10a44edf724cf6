#pragma once

#include "latentlab/core/error.hpp"
#include "latentlab/core/hash.hpp"
#include "latentlab/core/io.hpp"
#include "latentlab/core/rng.hpp"
#include "latentlab/eval/attribution.hpp"
#include "latentlab/eval/diagnostics.hpp"
#include "latentlab/eval/eval.hpp"
#include "latentlab/eval/report.hpp"
#include "latentlab/latent/latent.hpp"
#include "latentlab/model/checkpoint.hpp"
#include "latentlab/model/policy.hpp"
#include "latentlab/model/unembed.hpp"
#include "latentlab/model/vocab.hpp"
#include "latentlab/numerics/adam.hpp"
#include "latentlab/numerics/autodiff.hpp"
#include "latentlab/numerics/kernels.hpp"
#include "latentlab/numerics/tensor.hpp"
#include "latentlab/pipeline/pipeline.hpp"
#include "latentlab/steer/steer.hpp"
#include "latentlab/training/demos.hpp"
#include "latentlab/training/rollout.hpp"
#include "latentlab/training/train.hpp"
#include "latentlab/world/manifest.hpp"
#include "latentlab/world/oracle.hpp"
#include "latentlab/world/suite.hpp"
#include "latentlab/world/words.hpp"
#include "latentlab/world/world.hpp"
