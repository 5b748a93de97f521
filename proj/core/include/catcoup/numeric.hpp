#pragma once

#include <cstddef>

#include "catcoup/matrix.hpp"

namespace catcoup {

/// log(exp(a) + exp(b)) without overflow.
double log_add_exp(double a, double b);

double logsumexp(const Vec& v);

/// softmax(v); shift-invariant and safe for large magnitudes.
Vec softmax(const Vec& logits);

/// v - logsumexp(v).
Vec log_softmax(const Vec& logits);

/// Log-softmax with entries clamped below at `floor` and renormalized, so the
/// implied probabilities are strictly positive even for extreme logit ranges.
/// Logit ranges below |floor| are unaffected to fp precision.
Vec stabilized_log_softmax(const Vec& logits, double floor = -30.0);

/// Index of the largest entry; ties broken by lowest index.
std::size_t argmax_index(const Vec& v);

double sum(const Vec& v);
double mean(const Vec& v);

bool all_finite(const Vec& v);

/// Throws std::invalid_argument unless p is a length >= 2 probability vector
/// (entries >= 0, sum within tol of 1).
void require_distribution(const Vec& p, double tol = 1e-9, const char* what = "distribution");

/// Throws unless every entry is strictly positive (on top of the above).
void require_positive_distribution(const Vec& p, double tol = 1e-9,
                                   const char* what = "distribution");

void require_finite_logits(const Vec& l, const char* what = "logits");

}  // namespace catcoup
