#pragma once

#include "ppgbp/classifiers/forest.hpp"
#include "ppgbp/classifiers/svm.hpp"
#include "ppgbp/dataset.hpp"
#include "ppgbp/ensemble.hpp"
#include "ppgbp/error.hpp"
#include "ppgbp/experiment/config.hpp"
#include "ppgbp/experiment/pipeline.hpp"
#include "ppgbp/experiment/report.hpp"
#include "ppgbp/experiment/runner.hpp"
#include "ppgbp/ica.hpp"
#include "ppgbp/metrics.hpp"
#include "ppgbp/nn/architectures.hpp"
#include "ppgbp/nn/layers.hpp"
#include "ppgbp/nn/lstm.hpp"
#include "ppgbp/nn/model.hpp"
#include "ppgbp/nn/model_io.hpp"
#include "ppgbp/nn/tensor.hpp"
#include "ppgbp/nn/train.hpp"
#include "ppgbp/preprocess.hpp"
#include "ppgbp/provenance.hpp"
#include "ppgbp/rng.hpp"
#include "ppgbp/spectral.hpp"
#include "ppgbp/synthetic.hpp"
