#pragma once

#include "cvmio/error.hpp"
#include "cvmio/mem.hpp"
#include "cvmio/ring.hpp"
#include "cvmio/pools.hpp"
#include "cvmio/devsim.hpp"
#include "cvmio/aead.hpp"
#include "cvmio/ipsec.hpp"
#include "cvmio/factors.hpp"
#include "cvmio/stats.hpp"
#include "cvmio/testbed.hpp"
#include "cvmio/bench.hpp"
#include "cvmio/adversary.hpp"
