#pragma once

#include "tabuq/augment.hpp"
#include "tabuq/complexity.hpp"
#include "tabuq/ensemble.hpp"
#include "tabuq/errors.hpp"
#include "tabuq/evaluation.hpp"
#include "tabuq/geometry.hpp"
#include "tabuq/harness.hpp"
#include "tabuq/image.hpp"
#include "tabuq/parallel.hpp"
#include "tabuq/table_model.hpp"
