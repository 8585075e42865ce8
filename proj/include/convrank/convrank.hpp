#pragma once

#include "convrank/checkpoint.hpp"
#include "convrank/common.hpp"
#include "convrank/dump.hpp"
#include "convrank/embedding.hpp"
#include "convrank/eval.hpp"
#include "convrank/example.hpp"
#include "convrank/model.hpp"
#include "convrank/text.hpp"
#include "convrank/train.hpp"
#include "convrank/tree.hpp"
#include "convrank/vocab.hpp"
