#pragma once

#include "qwzmem/berry_topology.hpp"
#include "qwzmem/bloch_model.hpp"
#include "qwzmem/errors.hpp"
#include "qwzmem/memory_analyzer.hpp"
#include "qwzmem/quench_engine.hpp"
