#pragma once

#include "errdetect/common.hpp"
#include "errdetect/config.hpp"
#include "errdetect/constraints.hpp"
#include "errdetect/dataset.hpp"
#include "errdetect/detector.hpp"
#include "errdetect/embedding.hpp"
#include "errdetect/features.hpp"
#include "errdetect/harness.hpp"
#include "errdetect/neural.hpp"
#include "errdetect/noisy_channel.hpp"
#include "errdetect/serialize.hpp"
