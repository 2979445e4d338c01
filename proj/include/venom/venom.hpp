#pragma once

#include "venom/attack.hpp"
#include "venom/autodiff.hpp"
#include "venom/batch.hpp"
#include "venom/binio.hpp"
#include "venom/checkpoint.hpp"
#include "venom/classifier.hpp"
#include "venom/config.hpp"
#include "venom/dataset.hpp"
#include "venom/ddim.hpp"
#include "venom/denoiser.hpp"
#include "venom/errors.hpp"
#include "venom/metrics.hpp"
#include "venom/model_io.hpp"
#include "venom/nn.hpp"
#include "venom/pgm.hpp"
#include "venom/records_io.hpp"
#include "venom/rng.hpp"
#include "venom/schedule.hpp"
#include "venom/tensor.hpp"
