#pragma once

#include "adaptometer/glmm/laplace.hpp"
#include "adaptometer/glmm/logistic.hpp"
#include "adaptometer/glmm/model.hpp"
#include "adaptometer/glmm/report.hpp"
#include "adaptometer/glmm/select.hpp"
