#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mgs/codec.hpp"
#include "mgs/common.hpp"
#include "mgs/quantize.hpp"

namespace mgs {

// ---------------------------------------------------------------------------
// Exact multiple-choice knapsack: pick one option per item, minimize total
// loss subject to one size budget. Item states merge through a Pareto
// frontier of (size, loss) pairs with dominated states dropped; sizes are
// tracked at full precision, so a returned solution can never violate the
// budget. Only when a frontier outgrows its cap is it thinned to 64-byte
// size buckets (keeping the best loss per bucket), which bounds memory on
// the big pipeline instances while leaving small instances fully exact.
// ---------------------------------------------------------------------------

struct MckpOption {
  double loss = 0;
  double size = 0;
};

namespace detail {

/// Exact regime: Pareto-frontier merge with full-precision sizes. Returns
/// nullopt when a frontier outgrows the cap (caller falls back to the grid
/// DP); throws InfeasibleError when no combination fits.
inline std::optional<std::vector<int>> mckp_pareto(
    const std::vector<std::vector<MckpOption>>& items, double budget) {
  struct State {
    double size;
    double loss;
    uint32_t parent;
    uint8_t option;
  };
  constexpr size_t kFrontierCap = 1u << 15;

  std::vector<std::vector<std::pair<uint32_t, uint8_t>>> links(items.size());
  std::vector<State> frontier = {{0.0, 0.0, 0, 0}};
  std::vector<State> merged;
  for (size_t i = 0; i < items.size(); ++i) {
    if (frontier.size() * items[i].size() > kFrontierCap * 4) return std::nullopt;
    merged.clear();
    merged.reserve(frontier.size() * items[i].size());
    for (uint32_t f = 0; f < frontier.size(); ++f)
      for (size_t o = 0; o < items[i].size(); ++o) {
        double size = frontier[f].size + items[i][o].size;
        if (size > budget) continue;
        merged.push_back({size, frontier[f].loss + items[i][o].loss, f, uint8_t(o)});
      }
    if (merged.empty())
      throw InfeasibleError("mckp infeasible: no option combination fits the budget", 0.0);
    // Stable: exact ties resolve to the lexicographically-smallest choice.
    std::stable_sort(merged.begin(), merged.end(), [](const State& a, const State& b) {
      if (a.size != b.size) return a.size < b.size;
      return a.loss < b.loss;
    });
    // Pareto prune: keep loss strictly decreasing as size grows.
    std::vector<State> pruned;
    double best_loss = std::numeric_limits<double>::infinity();
    for (const State& s : merged)
      if (s.loss < best_loss) {
        best_loss = s.loss;
        pruned.push_back(s);
      }
    if (pruned.size() > kFrontierCap) return std::nullopt;
    links[i].reserve(pruned.size());
    for (const State& s : pruned) links[i].emplace_back(s.parent, s.option);
    frontier = std::move(pruned);
  }

  // The frontier tail has the minimum loss (loss decreases with size).
  std::vector<int> result(items.size());
  uint32_t cursor = uint32_t(frontier.size() - 1);
  for (size_t i = items.size(); i-- > 0;) {
    result[i] = links[i][cursor].second;
    cursor = links[i][cursor].first;
  }
  return result;
}

/// Grid regime: dynamic programming over the budget discretized to `unit`
/// bytes. Item sizes round up, so a returned solution never violates the
/// true budget; the cost is slight conservatism at the grid scale.
inline std::optional<std::vector<int>> mckp_grid_dp(
    const std::vector<std::vector<MckpOption>>& items, double budget, double unit) {
  size_t g = items.size();
  uint64_t units = uint64_t(std::floor(budget / unit));
  // The table never needs more capacity than every item at its largest.
  double max_total = 0;
  for (const auto& opts : items) {
    double mx = 0;
    for (const auto& o : opts) mx = std::max(mx, std::ceil(o.size / unit));
    max_total += mx;
  }
  units = std::min(units, uint64_t(max_total));
  if (units > (uint64_t(1) << 24)) return std::nullopt;  // table would be degenerate in size
  size_t u = size_t(units) + 1;

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dp(u, 0.0);  // "no items yet": zero loss at any capacity
  std::vector<double> next(u);
  std::vector<std::vector<uint8_t>> choice(g, std::vector<uint8_t>(u, 0xFF));
  std::vector<size_t> opt_units;
  for (size_t i = 0; i < g; ++i) {
    std::fill(next.begin(), next.end(), inf);
    opt_units.assign(items[i].size(), 0);
    for (size_t o = 0; o < items[i].size(); ++o)
      opt_units[o] = size_t(std::ceil(items[i][o].size / unit));
    for (size_t b = 0; b < u; ++b) {
      double best = inf;
      uint8_t pick = 0xFF;
      for (size_t o = 0; o < items[i].size(); ++o) {
        size_t s = opt_units[o];
        if (s > b) continue;
        double cand = dp[b - s] + items[i][o].loss;
        if (cand < best) {
          best = cand;
          pick = uint8_t(o);
        }
      }
      next[b] = best;
      choice[i][b] = pick;
    }
    std::swap(dp, next);
  }
  if (!std::isfinite(dp[u - 1])) return std::nullopt;

  std::vector<int> result(g);
  size_t b = u - 1;
  for (size_t i = g; i-- > 0;) {
    uint8_t o = choice[i][b];
    result[i] = o;
    b -= size_t(std::ceil(items[i][size_t(o)].size / unit));
  }
  return result;
}

}  // namespace detail

/// Exact minimum-loss choice per item under the size budget. Throws
/// InfeasibleError (carrying the minimum achievable size) when even the
/// smallest options overflow.
inline std::vector<int> mckp_solve(const std::vector<std::vector<MckpOption>>& items,
                                   double budget) {
  if (items.empty()) return {};
  double min_size = 0;
  for (const auto& opts : items) {
    if (opts.empty()) throw std::invalid_argument("mckp item with no options");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& o : opts) best = std::min(best, o.size);
    min_size += best;
  }
  if (min_size > budget)
    throw InfeasibleError("mckp infeasible: minimum achievable size " +
                              std::to_string(min_size) + " exceeds budget " +
                              std::to_string(budget),
                          min_size);

  if (auto exact = detail::mckp_pareto(items, budget)) return *exact;
  if (auto coarse = detail::mckp_grid_dp(items, budget, std::max(64.0, budget / double(1u << 20))))
    return *coarse;
  // Fine re-solve for coarse-grid artifacts (1-byte units unless the budget
  // forces a larger grain to bound the table).
  if (auto fine = detail::mckp_grid_dp(items, budget, std::max(1.0, budget / double(1u << 20))))
    return *fine;
  // The budget is feasible (checked above) but every grid rounding failed:
  // fall back to the minimum-size choice.
  std::vector<int> result(items.size());
  for (size_t i = 0; i < items.size(); ++i) {
    int best = 0;
    for (size_t o = 1; o < items[i].size(); ++o)
      if (items[i][o].size < items[i][size_t(best)].size) best = int(o);
    result[i] = best;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Search configuration and report.
// ---------------------------------------------------------------------------

struct SearchConfig {
  double budget_bytes = 0;
  std::vector<double> tau_grid = {0.3, 0.4, 0.5, 0.6, 0.8, 1.0};
  int max_calibration_rounds = 8;
  double tolerance = 0.05;
  EncodeConfig enc;
};

struct TauDiagnostics {
  double tau = 0;
  bool skipped = false;
  std::string note;
  int iterations = 0;
  double actual_bytes = 0;
  double s_delta = 0;
  double omega = 0;
  bool feasible = false;
  bool saturated = false;
  uint32_t retained = 0;
};

struct SearchResult {
  bool feasible = false;
  double tau = 0;
  BitWidthMatrix q;
  TransformPlan plan;
  std::vector<uint8_t> container;
  double actual_bytes = 0;
  double omega = 0;
  uint32_t retained = 0;
  std::vector<TauDiagnostics> per_tau;
  double closest_bytes = 0;           // closest achieved size (for failures)
  double alt_reading_tau = -1;        // what the literal max-reading would pick
};

namespace detail {

/// Per-channel views over the two transform variants of the loss tables and
/// their partitions. Scale channels may be quantized raw or transformed;
/// every other channel always uses the transformed table.
struct VariantTables {
  GroupPartition part_raht, part_raw;
  LossTable omega_raht, omega_raw;

  const GroupPartition& partition(bool raht_flag) const {
    return raht_flag ? part_raht : part_raw;
  }
  const LossTable& table(bool raht_flag) const { return raht_flag ? omega_raht : omega_raw; }
};

inline VariantTables build_variants(const PreparedModel& pm) {
  VariantTables v;
  auto streams_raht = pm.streams(TransformPlan::all_raht());
  TransformPlan none;
  none.raht.fill(false);
  auto streams_raw = pm.streams(none);
  v.part_raht = GroupPartition::build(pm.stream_lengths(TransformPlan::all_raht()), pm.cfg.blocks);
  v.part_raw = GroupPartition::build(pm.stream_lengths(none), pm.cfg.blocks);
  size_t max_blocks = 0;
  for (int c = 0; c < kChannelCount; ++c) {
    max_blocks = std::max(max_blocks, v.part_raht.block_count(c));
    max_blocks = std::max(max_blocks, v.part_raw.block_count(c));
  }
  v.omega_raht = build_loss_table(streams_raht, v.part_raht, max_blocks, pm.cfg.norm);
  v.omega_raw = build_loss_table(streams_raw, v.part_raw, max_blocks, pm.cfg.norm);
  return v;
}

/// Proportional split of a budget across channels by channel-level widths;
/// the rounding remainder goes to the widest channel.
inline std::vector<double> split_channel_budget(const std::vector<int>& q_c, double budget) {
  double total = 0;
  for (int q : q_c) total += q;
  if (total <= 0) throw std::invalid_argument("channel widths must be positive");
  std::vector<double> out(q_c.size());
  double assigned = 0;
  for (size_t i = 0; i < q_c.size(); ++i) {
    out[i] = budget * double(q_c[i]) / total;
    assigned += out[i];
  }
  size_t widest = 0;
  for (size_t i = 1; i < q_c.size(); ++i)
    if (q_c[i] > q_c[widest]) widest = i;
  out[widest] += budget - assigned;
  return out;
}

inline bool scale_flag_for_width(int channel, int width) {
  return !(is_scale_channel(channel) && width <= 8);
}

/// Total loss of a bit-width matrix under per-channel transform flags.
inline double total_quality(const VariantTables& v, const TransformPlan& plan,
                            const BitWidthMatrix& q) {
  double sum = 0;
  for (int c = 0; c < kChannelCount; ++c) {
    const auto& part = v.partition(plan.raht[c]);
    const auto& table = v.table(plan.raht[c]);
    for (size_t j = 0; j < part.block_count(c); ++j) sum += table.at(c, j, q.at(c, j));
  }
  return sum;
}

}  // namespace detail

/// Channel-level 0-1 ILP: one width 1..16 per channel, loss aggregated over
/// the channel's groups, sizes proportional to the stream length.
inline std::vector<int> solve_channel_ilp(const detail::VariantTables& v, double budget) {
  std::vector<std::vector<MckpOption>> items(kChannelCount);
  for (int c = 0; c < kChannelCount; ++c) {
    items[c].resize(kMaxBits);
    for (int b = 1; b <= kMaxBits; ++b) {
      bool raht = detail::scale_flag_for_width(c, b);
      const auto& part = v.partition(raht);
      const auto& table = v.table(raht);
      double loss = 0, bytes = 0;
      for (size_t j = 0; j < part.block_count(c); ++j) {
        loss += table.at(c, j, b);
        bytes += double(part.block_length(c, j)) / 8.0 * double(b);
      }
      items[c][size_t(b - 1)] = {loss, bytes};
    }
  }
  std::vector<int> picks = mckp_solve(items, budget);
  for (auto& p : picks) p += 1;  // option index -> width
  return picks;
}

/// Group-level 0-1 ILP for one channel: width 0..16 per group (0 drops the
/// payload entirely), under the channel's share of the budget.
inline std::vector<int> solve_group_ilp(const LossTable& omega, const GroupPartition& part,
                                        int channel, double channel_budget) {
  size_t blocks = part.block_count(size_t(channel));
  std::vector<std::vector<MckpOption>> items(blocks);
  for (size_t j = 0; j < blocks; ++j) {
    items[j].resize(kMaxBits + 1);
    for (int b = 0; b <= kMaxBits; ++b) {
      double bytes = double(part.block_length(size_t(channel), j)) / 8.0 * double(b);
      items[j][size_t(b)] = {omega.at(size_t(channel), j, b), bytes};
    }
  }
  return mckp_solve(items, channel_budget);
}

/// Algorithm-style search: discrete tau sampling, per-tau calibration of the
/// affine size model, hierarchical 0-1 ILP for the widths, budget-first SH
/// retention, keep-best by minimal total quantization loss.
inline SearchResult search(const GaussianCloud& cloud, const std::vector<Camera>& cameras,
                           const SearchConfig& cfg) {
  if (cfg.budget_bytes <= 0) throw std::invalid_argument("budget must be positive");
  if (cfg.tau_grid.empty()) throw std::invalid_argument("tau grid must be nonempty");
  for (double t : cfg.tau_grid)
    if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("tau grid values must be in (0,1]");

  const double s_t = cfg.budget_bytes;
  double tau_max = *std::max_element(cfg.tau_grid.begin(), cfg.tau_grid.end());

  ImportanceScores scores = ImportanceScores::compute(cloud, cameras, cfg.enc.beta);

  SearchResult best;
  best.omega = std::numeric_limits<double>::infinity();
  best.closest_bytes = std::numeric_limits<double>::infinity();
  double alt_best_omega = -std::numeric_limits<double>::infinity();

  for (double tau : cfg.tau_grid) {
    TauDiagnostics diag;
    diag.tau = tau;

    PreparedModel pm = prepare_model(cloud, scores.joint, tau, cfg.enc);
    size_t m = pm.gaussian_count();

    // Round 0: all-8 widths, scale channels raw.
    BitWidthMatrix q = BitWidthMatrix::uniform(kChannelCount, size_t(cfg.enc.blocks), 8);
    std::array<int, kChannelCount> widths8{};
    widths8.fill(8);
    TransformPlan plan = TransformPlan::for_bit_widths(widths8);
    BuildResult built = build_container(pm, q, plan, 0, tau);
    diag.actual_bytes = built.total_bytes;

    // Doubling skip: if even twice the current size cannot reach the
    // budget, too few gaussians survive; move to a larger tau.
    if (2.0 * built.total_bytes < s_t && tau < tau_max) {
      diag.skipped = true;
      diag.note = "doubled size below budget; retaining more gaussians";
      best.per_tau.push_back(diag);
      if (std::abs(built.total_bytes - s_t) < std::abs(best.closest_bytes - s_t))
        best.closest_bytes = built.total_bytes;
      continue;
    }

    detail::VariantTables variants = detail::build_variants(pm);
    bool converged = false, saturated = false;
    double s_delta = 0;

    for (int round = 0; round < cfg.max_calibration_rounds; ++round) {
      diag.iterations = round + 1;

      // Affine size model against the latest build: S(Q) = sum P.q + C + s_delta.
      double pre_entropy = 0;
      for (int c = 0; c < kChannelCount; ++c) {
        const auto& part = variants.partition(plan.raht[c]);
        for (size_t j = 0; j < part.block_count(c); ++j)
          pre_entropy += double(part.block_length(c, j)) / 8.0 * double(q.at(c, j));
      }
      double const_bytes = built.total_bytes - built.payload_bytes;
      s_delta = built.payload_bytes - pre_entropy;
      diag.s_delta = s_delta;
      double allowed = s_t - const_bytes - s_delta;
      if (allowed < 1.0) allowed = 1.0;  // keep per-group budgets positive

      std::vector<int> q_c;
      try {
        q_c = solve_channel_ilp(variants, allowed);
      } catch (const InfeasibleError& e) {
        diag.note = "channel ILP infeasible: " + std::string(e.what());
        break;
      }
      for (int c = 0; c < kChannelCount; ++c)
        plan.raht[c] = detail::scale_flag_for_width(c, q_c[size_t(c)]);

      std::vector<double> budgets = detail::split_channel_budget(q_c, allowed);
      bool group_failed = false;
      for (int c = 0; c < kChannelCount; ++c) {
        const auto& part = variants.partition(plan.raht[c]);
        const auto& table = variants.table(plan.raht[c]);
        std::vector<int> q_g;
        try {
          q_g = solve_group_ilp(table, part, c, budgets[size_t(c)]);
        } catch (const InfeasibleError&) {
          group_failed = true;  // cannot happen: width 0 is always feasible
          break;
        }
        for (size_t j = 0; j < part.block_count(c); ++j) q.at(c, j) = uint8_t(q_g[j]);
        for (size_t j = part.block_count(c); j < q.blocks; ++j) q.at(c, j) = 0;
      }
      if (group_failed) {
        diag.note = "group ILP infeasible";
        break;
      }

      built = build_container(pm, q, plan, 0, tau);
      diag.actual_bytes = built.total_bytes;
      if (std::abs(built.total_bytes - s_t) / s_t < cfg.tolerance) {
        converged = true;
        break;
      }
      bool all_max = true;
      for (int c = 0; c < kChannelCount && all_max; ++c)
        for (size_t j = 0; j < variants.partition(plan.raht[c]).block_count(c); ++j)
          if (q.at(c, j) != kMaxBits) {
            all_max = false;
            break;
          }
      if (all_max && built.total_bytes <= s_t) {
        saturated = true;  // budget exceeds the finest representation
        break;
      }
    }

    diag.saturated = saturated;
    if (converged || saturated) {
      // Budget-first retention: leftover bytes preserve original SH rows.
      uint32_t retention = 0;
      if (pm.dedup.rest_dim() > 0 && built.total_bytes < s_t) {
        double per_vec = double(pm.dedup.rest_dim()) * 4.0 + 2.0;
        retention = plan_retention(m, built.total_bytes, s_t, per_vec);
        if (retention > 0) {
          built = build_container(pm, q, plan, retention, tau);
          diag.actual_bytes = built.total_bytes;
        }
      }
      diag.retained = retention;
      diag.feasible = std::abs(built.total_bytes - s_t) / s_t < cfg.tolerance ||
                      (saturated && built.total_bytes <= s_t);
      diag.omega = detail::total_quality(variants, plan, q);

      if (diag.feasible) {
        if (diag.omega < best.omega) {
          best.feasible = true;
          best.tau = tau;
          best.q = q;
          best.plan = plan;
          best.container = built.bytes;
          best.actual_bytes = built.total_bytes;
          best.omega = diag.omega;
          best.retained = retention;
        }
        // The literal "Omega(Q) > M*" reading would keep the largest value.
        if (diag.omega > alt_best_omega) {
          alt_best_omega = diag.omega;
          best.alt_reading_tau = tau;
        }
      }
    } else if (diag.note.empty()) {
      diag.note = "calibration did not converge";
    }
    if (std::abs(diag.actual_bytes - s_t) < std::abs(best.closest_bytes - s_t))
      best.closest_bytes = diag.actual_bytes;
    best.per_tau.push_back(diag);
  }

  if (!best.feasible)
    throw InfeasibleError("no tau in the grid met the budget; closest achieved size " +
                              std::to_string(best.closest_bytes) + " bytes",
                          best.closest_bytes);
  return best;
}

}  // namespace mgs
