#pragma once

// Sweeps over (method x reference x seed) and the reports built from them.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cpt/cpt.hpp"
#include "cpt/data.hpp"
#include "cpt/metrics.hpp"

namespace cpt {

inline const std::vector<ReferenceVector>& default_references() {
  static const std::vector<ReferenceVector> refs = {{2, 1}, {3, 2}, {1, 1}, {2, 3}, {1, 2}, {1, 3}};
  return refs;
}

// Fairness weight used by scalarization for a given reference.
inline double scalar_weight_for(const ReferenceVector& v) { return v.acc / (v.fair + v.acc); }

struct SweepSpec {
  std::vector<ReferenceVector> references = default_references();
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3};
  std::vector<Method> methods = {Method::cpt, Method::scalarization};
  TrainConfig base;

  void validate() const {
    if (references.empty() || seeds.empty() || methods.empty())
      throw Error("sweep needs at least one reference, seed and method");
    for (const auto& r : references) r.validate();
  }

  TrainConfig cell_config(Method m, const ReferenceVector& ref, std::uint64_t seed) const {
    TrainConfig c = base;
    c.method = m;
    c.reference = ref;
    c.seed = seed;
    if (m == Method::scalarization) c.scalar_weight = scalar_weight_for(ref);
    return c;
  }
};

struct CellOutcome {
  TrainConfig config;
  bool ok = false;
  std::string error;
  FrontPoint point;
  std::optional<TrainResult> result;
  double wall_seconds = 0.0;
};

inline FrontPoint front_point(const TrainConfig& cfg, const Evaluation& e) {
  return FrontPoint{std::string(to_string(cfg.method)), cfg.reference, cfg.seed, e.acc_loss, e.fair_loss,
                    e.accuracy, e.eodd};
}

inline CellOutcome run_cell(const GroupedDataset& train_set, const GroupedDataset& test_set, const TrainConfig& cfg) {
  CellOutcome out;
  out.config = cfg;
  const auto start = std::chrono::steady_clock::now();
  try {
    TrainResult r = train(train_set, cfg);
    const Mlp net(r.model);
    out.point = front_point(cfg, evaluate(net, r.params, test_set.as_batch()));
    out.result = std::move(r);
    out.ok = true;
  } catch (const Error& e) {
    out.error = e.what();
  }
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

// Runs every cell with up to `jobs` worker threads. Cells are independent and
// deterministic, so the result (ordered method-major, then reference, then
// seed) does not depend on `jobs`. `on_done` is called once per cell, serialized.
inline std::vector<CellOutcome> run_sweep(const GroupedDataset& train_set, const GroupedDataset& test_set,
                                          const SweepSpec& spec, std::size_t jobs,
                                          const std::function<void(const CellOutcome&)>& on_done = {}) {
  spec.validate();
  std::vector<TrainConfig> cells;
  for (auto m : spec.methods)
    for (const auto& r : spec.references)
      for (auto s : spec.seeds) cells.push_back(spec.cell_config(m, r, s));

  std::vector<CellOutcome> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex done_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      results[i] = run_cell(train_set, test_set, cells[i]);
      if (on_done) {
        std::lock_guard lock(done_mutex);
        on_done(results[i]);
      }
    }
  };
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(cells.size(), 1));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  return results;
}

// Seed-averaged metrics of one (method, reference) group.
struct ReportRow {
  std::string method;
  ReferenceVector reference;
  bool is_delta = false;
  std::size_t n_seeds = 0;
  double accuracy = 0.0, eodd = 0.0, fair_loss = 0.0, acc_loss = 0.0;
};

namespace detail {

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  std::string s = buf;
  if (s == "-0.000000") s = "0.000000";
  return s;
}

inline std::vector<std::string> methods_in_order(const std::vector<FrontPoint>& pts) {
  std::vector<std::string> out;
  for (const auto& p : pts)
    if (std::find(out.begin(), out.end(), p.method) == out.end()) out.push_back(p.method);
  return out;
}

}  // namespace detail

// Per method: metrics at v=(1,1) in absolute terms, every other reference as a
// difference from v=(1,1). Metrics are averaged over seeds before differencing.
// Without a v=(1,1) group, every row is absolute.
inline std::vector<ReportRow> build_report(const std::vector<FrontPoint>& pts) {
  std::vector<ReportRow> rows;
  for (const auto& method : detail::methods_in_order(pts)) {
    std::vector<ReportRow> groups;
    for (const auto& p : pts) {
      if (p.method != method) continue;
      auto it = std::find_if(groups.begin(), groups.end(), [&](const ReportRow& r) { return r.reference == p.reference; });
      if (it == groups.end()) {
        ReportRow row;
        row.method = method;
        row.reference = p.reference;
        groups.push_back(row);
        it = std::prev(groups.end());
      }
      ++it->n_seeds;
      it->accuracy += p.accuracy;
      it->eodd += p.eodd;
      it->fair_loss += p.fair_loss;
      it->acc_loss += p.acc_loss;
    }
    for (auto& g : groups) {
      const double n = static_cast<double>(g.n_seeds);
      g.accuracy /= n;
      g.eodd /= n;
      g.fair_loss /= n;
      g.acc_loss /= n;
    }
    const auto base = std::find_if(groups.begin(), groups.end(),
                                   [](const ReportRow& r) { return r.reference == ReferenceVector{1.0, 1.0}; });
    const std::optional<ReportRow> anchor = base == groups.end() ? std::nullopt : std::optional(*base);
    for (auto g : groups) {
      if (anchor && !(g.reference == anchor->reference)) {
        g.is_delta = true;
        g.accuracy -= anchor->accuracy;
        g.eodd -= anchor->eodd;
        g.fair_loss -= anchor->fair_loss;
        g.acc_loss -= anchor->acc_loss;
      }
      rows.push_back(g);
    }
  }
  return rows;
}

inline std::string report_to_csv(const std::vector<ReportRow>& rows) {
  using detail::fixed6;
  std::string out =
      "# per method: v=(1,1) absolute, other references as differences from v=(1,1); seeds averaged before "
      "differencing\n"
      "method,ref_fair,ref_acc,kind,n_seeds,accuracy,eodd,fair_loss,acc_loss\n";
  for (const auto& r : rows) {
    out += r.method + ',' + detail::format_double(r.reference.fair) + ',' + detail::format_double(r.reference.acc) +
           ',' + (r.is_delta ? "delta" : "abs") + ',' + std::to_string(r.n_seeds) + ',' + fixed6(r.accuracy) + ',' +
           fixed6(r.eodd) + ',' + fixed6(r.fair_loss) + ',' + fixed6(r.acc_loss) + '\n';
  }
  return out;
}

struct HypervolumeRow {
  std::string method;
  std::map<std::uint64_t, double> per_seed;
  double mean = 0.0;
};

// Per seed, (fair_loss, acc_loss) of every method are min-max scaled together;
// each method's front is then measured against `ref` and averaged over seeds.
inline std::vector<HypervolumeRow> hypervolume_by_method(const std::vector<FrontPoint>& pts, RefPoint ref = {},
                                                         bool normalize = true) {
  std::map<std::uint64_t, std::vector<const FrontPoint*>> by_seed;
  for (const auto& p : pts) by_seed[p.seed].push_back(&p);
  std::vector<HypervolumeRow> rows;
  for (const auto& method : detail::methods_in_order(pts)) {
    HypervolumeRow row;
    row.method = method;
    rows.push_back(std::move(row));
  }
  for (const auto& [seed, group] : by_seed) {
    std::vector<Point2> all;
    for (const auto* p : group) all.push_back({p->fair_loss, p->acc_loss});
    const AxisScaler scaler = normalize ? AxisScaler::fit(all) : AxisScaler{0.0, 1.0, 0.0, 1.0};
    for (auto& row : rows) {
      std::vector<Point2> front;
      for (const auto* p : group)
        if (p->method == row.method) front.push_back(scaler({p->fair_loss, p->acc_loss}));
      if (!front.empty()) row.per_seed[seed] = hypervolume2d(front, ref);
    }
  }
  for (auto& row : rows) {
    for (const auto& [seed, hv] : row.per_seed) row.mean += hv;
    if (!row.per_seed.empty()) row.mean /= static_cast<double>(row.per_seed.size());
  }
  return rows;
}

inline std::string hypervolume_to_csv(const std::vector<HypervolumeRow>& rows) {
  std::string out = "method,seed,hypervolume\n";
  for (const auto& r : rows) {
    for (const auto& [seed, hv] : r.per_seed) out += r.method + ',' + std::to_string(seed) + ',' + detail::fixed6(hv) + '\n';
    out += r.method + ",mean," + detail::fixed6(r.mean) + '\n';
  }
  return out;
}

}  // namespace cpt
