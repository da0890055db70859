#pragma once

#include "r4/error.hpp"
#include "r4/crc32.hpp"
#include "r4/codec.hpp"
#include "r4/model.hpp"
#include "r4/safety.hpp"
#include "r4/transport.hpp"
#include "r4/simulator.hpp"
#include "r4/client.hpp"
#include "r4/capture.hpp"
