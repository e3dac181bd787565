#pragma once

#include "fmtbias/adjudication.hpp"
#include "fmtbias/attention.hpp"
#include "fmtbias/conversion.hpp"
#include "fmtbias/corpus.hpp"
#include "fmtbias/corruption.hpp"
#include "fmtbias/csv.hpp"
#include "fmtbias/error.hpp"
#include "fmtbias/format_kind.hpp"
#include "fmtbias/formats.hpp"
#include "fmtbias/gateway.hpp"
#include "fmtbias/hashing.hpp"
#include "fmtbias/jsonl.hpp"
#include "fmtbias/metrics.hpp"
#include "fmtbias/mock_script.hpp"
#include "fmtbias/pipeline.hpp"
#include "fmtbias/stats.hpp"
#include "fmtbias/templates.hpp"
#include "fmtbias/text_util.hpp"
