#pragma once

#include "cimdl/core.hpp"
#include "cimdl/eval.hpp"
#include "cimdl/gradcheck.hpp"
#include "cimdl/io.hpp"
#include "cimdl/model.hpp"
#include "cimdl/normals.hpp"
#include "cimdl/objective.hpp"
#include "cimdl/optimizer.hpp"
#include "cimdl/standardize.hpp"
#include "cimdl/synthetic.hpp"
