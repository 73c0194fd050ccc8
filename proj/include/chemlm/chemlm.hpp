// Copyright 2026 the chemlm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "chemlm/baseline.hpp"
#include "chemlm/checkpoint.hpp"
#include "chemlm/datapipe.hpp"
#include "chemlm/introspect.hpp"
#include "chemlm/metrics.hpp"
#include "chemlm/model.hpp"
#include "chemlm/molgraph.hpp"
#include "chemlm/optimizer.hpp"
#include "chemlm/rng.hpp"
#include "chemlm/selfies.hpp"
#include "chemlm/tensor.hpp"
#include "chemlm/tokenize.hpp"
#include "chemlm/trainer.hpp"
