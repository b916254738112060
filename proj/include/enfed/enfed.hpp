#pragma once

#include "enfed/aggregate.hpp"
#include "enfed/baselines.hpp"
#include "enfed/config.hpp"
#include "enfed/dataset.hpp"
#include "enfed/datasets.hpp"
#include "enfed/energy.hpp"
#include "enfed/errors.hpp"
#include "enfed/gradcheck.hpp"
#include "enfed/matrix.hpp"
#include "enfed/metrics.hpp"
#include "enfed/nn.hpp"
#include "enfed/protocol.hpp"
#include "enfed/rng.hpp"
#include "enfed/scenario.hpp"
#include "enfed/simnet.hpp"
#include "enfed/tcp.hpp"
#include "enfed/tcp_transport.hpp"
#include "enfed/wire.hpp"
