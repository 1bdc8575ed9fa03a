#pragma once

#include "leukoseg/histogram.hpp"
#include "leukoseg/labeling.hpp"
#include "leukoseg/morphology.hpp"
