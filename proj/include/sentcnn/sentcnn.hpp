#pragma once

#include "sentcnn/checkpoint.hpp"
#include "sentcnn/corpus.hpp"
#include "sentcnn/embed.hpp"
#include "sentcnn/error.hpp"
#include "sentcnn/eval.hpp"
#include "sentcnn/matrix.hpp"
#include "sentcnn/net.hpp"
#include "sentcnn/optim.hpp"
#include "sentcnn/pipeline.hpp"
#include "sentcnn/rng.hpp"
