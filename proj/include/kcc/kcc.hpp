#pragma once

#include "kcc/classifier.hpp"
#include "kcc/config.hpp"
#include "kcc/container.hpp"
#include "kcc/cosine.hpp"
#include "kcc/error.hpp"
#include "kcc/eval.hpp"
#include "kcc/gallery.hpp"
#include "kcc/keypoints.hpp"
#include "kcc/matching.hpp"
#include "kcc/render.hpp"
#include "kcc/synth.hpp"
