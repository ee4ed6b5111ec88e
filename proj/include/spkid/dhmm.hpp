#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "spkid/error.hpp"
#include "spkid/rng.hpp"

namespace spkid {

enum class HmmTopology { LeftToRight, Ergodic };

struct HmmConfig {
  std::size_t n_states = 5;
  HmmTopology topology = HmmTopology::LeftToRight;
  std::size_t max_iters = 20;
  double tol = 1e-4;  ///< stop when the total log-likelihood gain drops below this; 0 disables
  double emission_floor = 1e-8;
  double transition_floor = 1e-10;
  std::uint64_t seed = 0;
};

/// Discrete-observation HMM with row-stochastic transition and emission tables.
struct Dhmm {
  std::vector<double> pi;
  std::vector<std::vector<double>> trans;  ///< n_states x n_states
  std::vector<std::vector<double>> emis;   ///< n_states x n_symbols

  std::size_t n_states() const { return pi.size(); }
  std::size_t n_symbols() const { return emis.empty() ? 0 : emis[0].size(); }
};

namespace detail {

inline void normalize_row(std::vector<double>& row) {
  double sum = 0.0;
  for (double v : row) sum += v;
  require(sum > 0.0, "DegenerateModel", "cannot normalize an all-zero probability row");
  for (double& v : row) v /= sum;
}

}  // namespace detail

/// Fresh model: left-to-right (0.5 self / 0.5 next, absorbing last state,
/// start in state 0) or fully connected ergodic. Emissions start uniform with
/// a small seeded perturbation so states can diverge during training.
inline Dhmm init_model(std::size_t n_states, std::size_t n_symbols, const HmmConfig& cfg) {
  require(n_states >= 1, "ConfigInvalid", "need at least one state");
  require(n_symbols >= 2, "ConfigInvalid", "need at least two symbols");

  Dhmm m;
  m.pi.assign(n_states, 0.0);
  m.trans.assign(n_states, std::vector<double>(n_states, 0.0));
  m.emis.assign(n_states, std::vector<double>(n_symbols, 0.0));

  if (cfg.topology == HmmTopology::LeftToRight) {
    m.pi[0] = 1.0;
    for (std::size_t i = 0; i + 1 < n_states; ++i) {
      m.trans[i][i] = 0.5;
      m.trans[i][i + 1] = 0.5;
    }
    m.trans[n_states - 1][n_states - 1] = 1.0;
  } else {
    const double p = 1.0 / static_cast<double>(n_states);
    m.pi.assign(n_states, p);
    for (auto& row : m.trans) row.assign(n_states, p);
  }

  std::mt19937_64 rng(cfg.seed);
  const double base = 1.0 / static_cast<double>(n_symbols);
  for (auto& row : m.emis) {
    for (double& b : row) b = base * (1.0 + 0.1 * (2.0 * detail::unit_uniform(rng) - 1.0));
    detail::normalize_row(row);
  }
  return m;
}

namespace detail {

inline void check_sequence(const Dhmm& m, const std::vector<std::size_t>& seq) {
  require(!seq.empty(), "EmptySequence", "cannot score an empty symbol sequence");
  for (std::size_t s : seq) {
    require(s < m.n_symbols(), "SymbolOutOfRange",
            "symbol " + std::to_string(s) + " exceeds the model alphabet");
  }
}

/// Scaled forward pass. Fills per-frame normalizers and normalized alphas;
/// returns the log-likelihood, or -inf if the sequence is impossible.
inline double scaled_forward(const Dhmm& m, const std::vector<std::size_t>& seq,
                             std::vector<std::vector<double>>& alpha,
                             std::vector<double>& norms) {
  const std::size_t n = m.n_states();
  const std::size_t len = seq.size();
  alpha.assign(len, std::vector<double>(n, 0.0));
  norms.assign(len, 0.0);

  double ll = 0.0;
  for (std::size_t t = 0; t < len; ++t) {
    double norm = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double acc;
      if (t == 0) {
        acc = m.pi[j];
      } else {
        acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += alpha[t - 1][i] * m.trans[i][j];
      }
      const double a = acc * m.emis[j][seq[t]];
      alpha[t][j] = a;
      norm += a;
    }
    if (norm <= 0.0) return -std::numeric_limits<double>::infinity();
    for (double& a : alpha[t]) a /= norm;
    norms[t] = norm;
    ll += std::log(norm);
  }
  return ll;
}

/// Backward pass scaled with the forward normalizers, so that
/// gamma_t(i) = alpha_t(i) * beta_t(i) * norm_t.
inline void scaled_backward(const Dhmm& m, const std::vector<std::size_t>& seq,
                            const std::vector<double>& norms,
                            std::vector<std::vector<double>>& beta) {
  const std::size_t n = m.n_states();
  const std::size_t len = seq.size();
  beta.assign(len, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) beta[len - 1][i] = 1.0 / norms[len - 1];
  for (std::size_t t = len - 1; t-- > 0;) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        acc += m.trans[i][j] * m.emis[j][seq[t + 1]] * beta[t + 1][j];
      }
      beta[t][i] = acc / norms[t];
    }
  }
}

}  // namespace detail

/// Forward log-likelihood log P(seq | model), computed with per-frame scaling.
inline double log_likelihood(const Dhmm& m, const std::vector<std::size_t>& seq) {
  detail::check_sequence(m, seq);
  std::vector<std::vector<double>> alpha;
  std::vector<double> norms;
  return detail::scaled_forward(m, seq, alpha, norms);
}

/// Baum-Welch over several observation sequences: expected counts are summed
/// across sequences before each update. Emission and transition probabilities
/// are floored and renormalized after every update so no path ever becomes
/// strictly impossible. The returned history holds one total log-likelihood
/// per iteration, evaluated under the model that iteration started from.
inline Dhmm baum_welch(const std::vector<std::vector<std::size_t>>& sequences,
                       std::size_t n_symbols, const HmmConfig& cfg,
                       std::vector<double>* ll_history = nullptr) {
  require(!sequences.empty(), "EmptySequence", "need at least one training sequence");
  require(cfg.max_iters >= 1, "ConfigInvalid", "need at least one iteration");
  Dhmm m = init_model(cfg.n_states, n_symbols, cfg);
  for (const auto& seq : sequences) detail::check_sequence(m, seq);
  if (ll_history) ll_history->clear();

  const std::size_t n = cfg.n_states;
  double prev_ll = -std::numeric_limits<double>::infinity();

  for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
    std::vector<double> pi_num(n, 0.0);
    std::vector<std::vector<double>> trans_num(n, std::vector<double>(n, 0.0));
    std::vector<double> trans_den(n, 0.0);
    std::vector<std::vector<double>> emis_num(n, std::vector<double>(n_symbols, 0.0));
    std::vector<double> emis_den(n, 0.0);
    double total_ll = 0.0;

    for (const auto& seq : sequences) {
      std::vector<std::vector<double>> alpha, beta;
      std::vector<double> norms;
      const double ll = detail::scaled_forward(m, seq, alpha, norms);
      require(std::isfinite(ll), "DegenerateModel",
              "training sequence has zero probability under the current model");
      total_ll += ll;
      detail::scaled_backward(m, seq, norms, beta);

      const std::size_t len = seq.size();
      for (std::size_t t = 0; t < len; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
          const double gamma = alpha[t][i] * beta[t][i] * norms[t];
          if (t == 0) pi_num[i] += gamma;
          emis_num[i][seq[t]] += gamma;
          emis_den[i] += gamma;
          if (t + 1 < len) trans_den[i] += gamma;
        }
      }
      for (std::size_t t = 0; t + 1 < len; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
          if (alpha[t][i] == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) {
            trans_num[i][j] +=
                alpha[t][i] * m.trans[i][j] * m.emis[j][seq[t + 1]] * beta[t + 1][j];
          }
        }
      }
    }

    if (ll_history) ll_history->push_back(total_ll);

    for (std::size_t i = 0; i < n; ++i) {
      m.pi[i] = pi_num[i] / static_cast<double>(sequences.size());
      if (trans_den[i] > 0.0) {
        for (std::size_t j = 0; j < n; ++j) m.trans[i][j] = trans_num[i][j] / trans_den[i];
      }
      if (emis_den[i] > 0.0) {
        for (std::size_t k = 0; k < n_symbols; ++k) m.emis[i][k] = emis_num[i][k] / emis_den[i];
      }
      for (double& a : m.trans[i]) a = std::max(a, cfg.transition_floor);
      detail::normalize_row(m.trans[i]);
      for (double& b : m.emis[i]) b = std::max(b, cfg.emission_floor);
      detail::normalize_row(m.emis[i]);
    }

    if (cfg.tol > 0.0 && iter > 0 && total_ll - prev_ll < cfg.tol) break;
    prev_ll = total_ll;
  }
  return m;
}

}  // namespace spkid
