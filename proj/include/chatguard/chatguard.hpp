#pragma once

#include "chatguard/benchmark.hpp"
#include "chatguard/chat_ingest.hpp"
#include "chatguard/cross_validation.hpp"
#include "chatguard/dataset.hpp"
#include "chatguard/embedding.hpp"
#include "chatguard/emote_catalog.hpp"
#include "chatguard/emote_context.hpp"
#include "chatguard/emote_space.hpp"
#include "chatguard/error.hpp"
#include "chatguard/irc_client.hpp"
#include "chatguard/latency.hpp"
#include "chatguard/linear_svm.hpp"
#include "chatguard/message.hpp"
#include "chatguard/metrics.hpp"
#include "chatguard/model_io.hpp"
#include "chatguard/prompting.hpp"
#include "chatguard/random.hpp"
#include "chatguard/random_forest.hpp"
#include "chatguard/service.hpp"
