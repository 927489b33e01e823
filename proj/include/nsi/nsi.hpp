#pragma once

#include "nsi/bench.hpp"
#include "nsi/design.hpp"
#include "nsi/donors.hpp"
#include "nsi/error.hpp"
#include "nsi/estimator.hpp"
#include "nsi/graph.hpp"
#include "nsi/io.hpp"
#include "nsi/panel.hpp"
#include "nsi/spectral.hpp"
#include "nsi/validity.hpp"
