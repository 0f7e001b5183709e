#pragma once

// Umbrella header for the coupled-branch hidden Markov tree library.

#include "hmt/decoding.hpp"
#include "hmt/error.hpp"
#include "hmt/inference.hpp"
#include "hmt/io.hpp"
#include "hmt/learning.hpp"
#include "hmt/model.hpp"
#include "hmt/oracle.hpp"
#include "hmt/parallel.hpp"
#include "hmt/selfcheck.hpp"
#include "hmt/simulate.hpp"
#include "hmt/tree.hpp"
#include "hmt/version.hpp"
