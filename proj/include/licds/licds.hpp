#pragma once

#include "licds/codec.hpp"
#include "licds/common.hpp"
#include "licds/core.hpp"
#include "licds/integrate.hpp"
#include "licds/io.hpp"
#include "licds/learn.hpp"
#include "licds/local_model.hpp"
#include "licds/parallel.hpp"
#include "licds/systems.hpp"
