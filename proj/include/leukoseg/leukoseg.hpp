#pragma once

#include "leukoseg/bench.hpp"
#include "leukoseg/clustering.hpp"
#include "leukoseg/colorspace.hpp"
#include "leukoseg/config_json.hpp"
#include "leukoseg/corpus.hpp"
#include "leukoseg/error.hpp"
#include "leukoseg/image_io.hpp"
#include "leukoseg/imgproc.hpp"
#include "leukoseg/pipeline.hpp"
#include "leukoseg/raster.hpp"
#include "leukoseg/render.hpp"
#include "leukoseg/watershed.hpp"
