#pragma once

// Convenience include for the whole library.

#include "classifier.hpp"
#include "common.hpp"
#include "dataset.hpp"
#include "evaluation.hpp"
#include "exact.hpp"
#include "mrpt.hpp"
#include "parallel.hpp"
#include "projection.hpp"
#include "random.hpp"
#include "result.hpp"
#include "rptree.hpp"
