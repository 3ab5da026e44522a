#pragma once

#include "makeup/attack/pipeline.hpp"
#include "makeup/attack/target_model.hpp"
#include "makeup/attack/trainer.hpp"
#include "makeup/core/image_io.hpp"
#include "makeup/core/nn.hpp"
#include "makeup/core/serialize.hpp"
#include "makeup/core/tape.hpp"
#include "makeup/core/tensor.hpp"
#include "makeup/data/dataset.hpp"
#include "makeup/data/manifest.hpp"
#include "makeup/data/synthetic.hpp"
#include "makeup/defense/clp.hpp"
#include "makeup/defense/fine_prune.hpp"
#include "makeup/defense/gradcam.hpp"
#include "makeup/defense/neural_cleanse.hpp"
#include "makeup/defense/spectral.hpp"
#include "makeup/defense/strip.hpp"
#include "makeup/experiment/config.hpp"
#include "makeup/experiment/plot.hpp"
#include "makeup/experiment/report.hpp"
#include "makeup/experiment/runner.hpp"
#include "makeup/faceprep/histmatch.hpp"
#include "makeup/faceprep/regions.hpp"
#include "makeup/gan/losses.hpp"
#include "makeup/gan/models.hpp"
#include "makeup/gan/train.hpp"
#include "makeup/poison/nmi.hpp"
#include "makeup/poison/poisoner.hpp"
#include "makeup/poison/ssim.hpp"
