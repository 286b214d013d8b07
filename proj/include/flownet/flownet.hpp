#pragma once

// Umbrella header for the analysis library; the CLI lives in cli.hpp.

#include "flownet/bowtie.hpp"
#include "flownet/community.hpp"
#include "flownet/error.hpp"
#include "flownet/geonmf.hpp"
#include "flownet/hodge.hpp"
#include "flownet/ingest.hpp"
#include "flownet/network.hpp"
#include "flownet/stats.hpp"
#include "flownet/svg.hpp"
#include "flownet/synth.hpp"
