#pragma once

#define FNOCG_VERSION_STRING "0.1.0"
