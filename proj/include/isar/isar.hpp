#ifndef ISAR_ISAR_HPP
#define ISAR_ISAR_HPP

#include "signal_model.hpp"
#include "backprojection.hpp"
#include "bpdn.hpp"
#include "isr.hpp"
#include "rcs_extraction.hpp"
#include "io.hpp"

#endif  // ISAR_ISAR_HPP
