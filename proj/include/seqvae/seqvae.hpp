#pragma once

#include "seqvae/attention.hpp"
#include "seqvae/checkpoint.hpp"
#include "seqvae/config.hpp"
#include "seqvae/experiments.hpp"
#include "seqvae/grammar.hpp"
#include "seqvae/lstm.hpp"
#include "seqvae/metrics.hpp"
#include "seqvae/ops.hpp"
#include "seqvae/optim.hpp"
#include "seqvae/probes.hpp"
#include "seqvae/rng.hpp"
#include "seqvae/seq2seq.hpp"
#include "seqvae/tape.hpp"
#include "seqvae/tensor.hpp"
#include "seqvae/text.hpp"
#include "seqvae/trainer.hpp"
#include "seqvae/variational.hpp"
