#pragma once

// Serialization of configs, parameters, traces and front points.
//
//   params.json     {"model": {...}, "values": [...]}
//   trace.csv       step,stage,l_fair,l_acc,psi,alpha_fair,alpha_acc,alpha_kl,mask_density,
//                   epoch,l_fair_smooth,l_acc_smooth,lr
//   front points    method,ref_fair,ref_acc,seed,accuracy,eodd,fair_loss,acc_loss
//
// Doubles are written in shortest round-trip form so every file re-parses to
// bit-identical values.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cpt/cpt.hpp"
#include "cpt/data.hpp"
#include "cpt/errors.hpp"
#include "cpt/metrics.hpp"
#include "cpt/paramspace.hpp"

namespace cpt {

using nlohmann::json;

inline json to_json(const TrainConfig& c) {
  return {
      {"reference", {c.reference.fair, c.reference.acc}},
      {"psi", c.psi},
      {"gamma", c.gamma},
      {"beta_fair", c.beta_fair},
      {"beta_acc", c.beta_acc},
      {"beta_kl", c.beta_kl},
      {"lr", c.lr},
      {"lr_decay", c.lr_decay},
      {"momentum", c.momentum},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"hidden_dim", c.hidden_dim},
      {"seed", c.seed},
      {"method", std::string(to_string(c.method))},
      {"scalar_weight", c.scalar_weight},
      {"prune_threshold_mode", std::string(to_string(c.prune_mode))},
      {"loss_smoothing", std::string(to_string(c.loss_smoothing))},
  };
}

// Overlays the keys present in j onto c; unknown keys are rejected.
inline void apply_json(TrainConfig& c, const json& j) {
  if (!j.is_object()) throw SchemaError("config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "reference") {
        if (!v.is_array() || v.size() != 2) throw SchemaError("reference must be [fair, acc]");
        c.reference = {v[0].get<double>(), v[1].get<double>()};
      } else if (key == "psi") c.psi = v.get<double>();
      else if (key == "gamma") c.gamma = v.get<double>();
      else if (key == "beta_fair") c.beta_fair = v.get<double>();
      else if (key == "beta_acc") c.beta_acc = v.get<double>();
      else if (key == "beta_kl") c.beta_kl = v.get<double>();
      else if (key == "lr") c.lr = v.get<double>();
      else if (key == "lr_decay") c.lr_decay = v.get<double>();
      else if (key == "momentum") c.momentum = v.get<double>();
      else if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "hidden_dim") c.hidden_dim = v.get<std::size_t>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "scalar_weight") c.scalar_weight = v.get<double>();
      else if (key == "method") {
        const auto m = parse_method(v.get<std::string>());
        if (!m) throw SchemaError("unknown method '" + v.get<std::string>() + "'");
        c.method = *m;
      } else if (key == "prune_threshold_mode") {
        const auto m = parse_prune_mode(v.get<std::string>());
        if (!m) throw SchemaError("prune_threshold_mode must be mean or l1");
        c.prune_mode = *m;
      } else if (key == "loss_smoothing") {
        const auto m = parse_loss_smoothing(v.get<std::string>());
        if (!m) throw SchemaError("loss_smoothing must be per_objective, shared or raw");
        c.loss_smoothing = *m;
      } else {
        throw SchemaError("unknown config key '" + key + "'");
      }
    } catch (const json::exception& e) {
      throw SchemaError("config key '" + key + "': " + e.what());
    }
  }
}

inline TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  apply_json(c, j);
  return c;
}

// FNV-1a over the canonical (sorted-key) JSON dump.
inline std::string config_hash(const TrainConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_json(c).dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline json to_json(const ModelConfig& m) {
  return {{"input_dim", m.input_dim}, {"hidden_dim", m.hidden_dim}, {"num_classes", m.num_classes}, {"seed", m.seed}};
}

inline json params_to_json(const ModelConfig& m, const ParamVector& p) {
  return {{"model", to_json(m)}, {"values", p.values}};
}

struct SavedModel {
  ModelConfig model;
  ParamVector params;
};

inline SavedModel params_from_json(const json& j) {
  try {
    SavedModel s;
    const auto& m = j.at("model");
    s.model = {m.at("input_dim").get<std::size_t>(), m.at("hidden_dim").get<std::size_t>(),
               m.at("num_classes").get<std::size_t>(), m.at("seed").get<std::uint64_t>()};
    s.model.validate();
    s.params.values = j.at("values").get<Vector>();
    if (s.params.size() != s.model.parameter_count())
      throw SchemaError("parameter file holds " + std::to_string(s.params.size()) + " values, model needs " +
                        std::to_string(s.model.parameter_count()));
    return s;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed parameter file: ") + e.what());
  }
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  detail::write_file_atomic(path, j.dump(2) + "\n");
}

inline constexpr const char* kTraceHeader =
    "step,stage,l_fair,l_acc,psi,alpha_fair,alpha_acc,alpha_kl,mask_density,epoch,l_fair_smooth,l_acc_smooth,lr";

inline std::string trace_to_csv(const TrainTrace& trace) {
  using detail::format_double;
  std::string out = kTraceHeader;
  out += '\n';
  for (const auto& r : trace) {
    out += std::to_string(r.step) + ',' + std::string(to_string(r.stage)) + ',' + format_double(r.l_fair) + ',' +
           format_double(r.l_acc) + ',' + format_double(r.psi_value) + ',';
    for (int k = 0; k < 3; ++k) {
      if (r.alpha) out += format_double((*r.alpha)[static_cast<std::size_t>(k)]);
      out += ',';
    }
    out += format_double(r.mask_density) + ',' + std::to_string(r.epoch) + ',' + format_double(r.l_fair_smooth) +
           ',' + format_double(r.l_acc_smooth) + ',' + format_double(r.lr) + '\n';
  }
  return out;
}

inline TrainTrace parse_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader) throw ParseError(1, "unexpected trace header");
  TrainTrace trace;
  std::size_t line_no = 1;
  auto num = [&](std::string_view s) {
    const auto v = detail::parse_double(s);
    if (!v) throw ParseError(line_no, "bad number '" + std::string(s) + "'");
    return *v;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::split_commas(line);
    if (f.size() != 13) throw ParseError(line_no, "expected 13 trace fields");
    StepRecord r;
    r.step = static_cast<std::size_t>(num(f[0]));
    if (f[1] == "correction") r.stage = Stage::correction;
    else if (f[1] == "moo") r.stage = Stage::moo;
    else if (f[1] == "single") r.stage = Stage::single;
    else throw ParseError(line_no, "unknown stage");
    r.l_fair = num(f[2]);
    r.l_acc = num(f[3]);
    r.psi_value = num(f[4]);
    if (!f[5].empty()) r.alpha = std::array<double, 3>{num(f[5]), num(f[6]), num(f[7])};
    r.mask_density = num(f[8]);
    r.epoch = static_cast<std::size_t>(num(f[9]));
    r.l_fair_smooth = num(f[10]);
    r.l_acc_smooth = num(f[11]);
    r.lr = num(f[12]);
    trace.push_back(r);
  }
  return trace;
}

inline constexpr const char* kFrontHeader = "method,ref_fair,ref_acc,seed,accuracy,eodd,fair_loss,acc_loss";

inline std::string front_points_to_csv(const std::vector<FrontPoint>& pts) {
  using detail::format_double;
  std::string out = kFrontHeader;
  out += '\n';
  for (const auto& p : pts) {
    out += p.method + ',' + format_double(p.reference.fair) + ',' + format_double(p.reference.acc) + ',' +
           std::to_string(p.seed) + ',' + format_double(p.accuracy) + ',' + format_double(p.eodd) + ',' +
           format_double(p.fair_loss) + ',' + format_double(p.acc_loss) + '\n';
  }
  return out;
}

inline std::vector<FrontPoint> parse_front_points(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kFrontHeader) throw ParseError(1, "unexpected front-point header");
  std::vector<FrontPoint> pts;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::split_commas(line);
    if (f.size() != 8) throw ParseError(line_no, "expected 8 front-point fields");
    auto num = [&](std::string_view s) {
      const auto v = detail::parse_double(s);
      if (!v || !std::isfinite(*v)) throw ParseError(line_no, "bad number '" + std::string(s) + "'");
      return *v;
    };
    const auto seed = detail::parse_int(f[3]);
    if (!seed || *seed < 0) throw ParseError(line_no, "bad seed");
    FrontPoint p;
    p.method = std::string(f[0]);
    p.reference = {num(f[1]), num(f[2])};
    p.seed = static_cast<std::uint64_t>(*seed);
    p.accuracy = num(f[4]);
    p.eodd = num(f[5]);
    p.fair_loss = num(f[6]);
    p.acc_loss = num(f[7]);
    pts.push_back(std::move(p));
  }
  return pts;
}

inline std::vector<FrontPoint> load_front_points(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return parse_front_points(in);
}

inline json to_json(const FrontPoint& p) {
  return {{"method", p.method},       {"reference", {p.reference.fair, p.reference.acc}},
          {"seed", p.seed},           {"accuracy", p.accuracy},
          {"eodd", p.eodd},           {"fair_loss", p.fair_loss},
          {"acc_loss", p.acc_loss}};
}

}  // namespace cpt
