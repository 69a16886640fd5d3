#pragma once

#include "adaptometer/genconv/conversation.hpp"
#include "adaptometer/genconv/personas.hpp"
#include "adaptometer/genconv/transport.hpp"
