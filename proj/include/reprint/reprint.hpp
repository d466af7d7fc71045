#pragma once

#include "reprint/errors.hpp"
#include "reprint/rng.hpp"
#include "reprint/parallel.hpp"
#include "reprint/embedding_store.hpp"
#include "reprint/class_geometry.hpp"
#include "reprint/reprint_augmenter.hpp"
#include "reprint/baselines.hpp"
#include "reprint/soft_classifier.hpp"
#include "reprint/experiment.hpp"
