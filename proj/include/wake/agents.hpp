#pragma once

#include "wake/csv.hpp"
#include "wake/errors.hpp"
#include "wake/field.hpp"
#include "wake/llm_client.hpp"
#include "wake/metrics.hpp"
#include "wake/report.hpp"
#include "wake/rng.hpp"
#include "wake/surrogate.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace wake {

enum class LlmBackendKind { scripted, remote };

struct LlmBackendSpec {
  LlmBackendKind kind = LlmBackendKind::scripted;
  std::string base_url;  // empty: fall back to WAKE_AGENT_LLM_URL
  std::string model = "wakescout-default";
  double temperature = 0.35;
  int max_tokens = 1024;
};

struct CampaignConfig {
  MetricMode mode = MetricMode::delta_star_mode();
  double spacing_min = 3.5;
  double spacing_max = 10.0;
  double window_width = 1.0;
  SweepSpec sweep;
  int max_iterations = 10;
  double geometry_tolerance = 0.25;
  int n_frames = 16;
  int retry_budget = 2;
  SurrogateSpec surrogate;
  LlmBackendSpec llm;
  std::uint64_t master_seed = 2024;
  std::string out_dir = "out";

  void validate() const {
    if (max_iterations < 1)
      throw std::invalid_argument("CampaignConfig: max_iterations must be >= 1");
    if (!(window_width > 0.0))
      throw std::invalid_argument("CampaignConfig: window_width must be > 0");
    if (!(spacing_min < spacing_max))
      throw std::invalid_argument("CampaignConfig: empty spacing range");
    if (n_frames < 2)
      throw std::invalid_argument("CampaignConfig: n_frames must be >= 2");
    if (retry_budget < 1)
      throw std::invalid_argument("CampaignConfig: retry_budget must be >= 1");
    if (!(geometry_tolerance > 0.0))
      throw std::invalid_argument(
          "CampaignConfig: geometry_tolerance must be > 0");
    if (out_dir.empty())
      throw std::invalid_argument("CampaignConfig: out_dir must be set");
  }
};

inline MetricMode metric_mode_from_name(const std::string& name) {
  if (name == "delta-star" || name == "delta_star")
    return MetricMode::delta_star_mode();
  if (name == "theta") return MetricMode::theta_mode();
  throw std::invalid_argument("unknown metric: " + name);
}

inline const char* surrogate_backend_name(SurrogateBackend b) {
  switch (b) {
    case SurrogateBackend::analytic: return "analytic";
    case SurrogateBackend::replay: return "replay";
    case SurrogateBackend::remote: return "remote";
  }
  return "?";
}

inline SurrogateBackend surrogate_backend_from_name(const std::string& name) {
  if (name == "analytic") return SurrogateBackend::analytic;
  if (name == "replay") return SurrogateBackend::replay;
  if (name == "remote") return SurrogateBackend::remote;
  throw std::invalid_argument("unknown surrogate backend: " + name);
}

inline const char* llm_backend_name(LlmBackendKind k) {
  return k == LlmBackendKind::scripted ? "scripted" : "remote";
}

inline LlmBackendKind llm_backend_from_name(const std::string& name) {
  if (name == "scripted") return LlmBackendKind::scripted;
  if (name == "remote") return LlmBackendKind::remote;
  throw std::invalid_argument("unknown llm backend: " + name);
}

inline nlohmann::json campaign_config_to_json(const CampaignConfig& cfg) {
  nlohmann::json j;
  j["metric"] = cfg.mode.primary == PrimaryMetric::delta_star ? "delta_star"
                                                              : "theta";
  j["spacing_min"] = cfg.spacing_min;
  j["spacing_max"] = cfg.spacing_max;
  j["window_width"] = cfg.window_width;
  j["max_iterations"] = cfg.max_iterations;
  j["geometry_tolerance"] = cfg.geometry_tolerance;
  j["n_frames"] = cfg.n_frames;
  j["retry_budget"] = cfg.retry_budget;
  j["master_seed"] = cfg.master_seed;
  j["out_dir"] = cfg.out_dir;
  j["sweep"] = {{"x_start", cfg.sweep.x_start},
                {"x_end_offset", cfg.sweep.x_end_offset},
                {"step", cfg.sweep.step},
                {"ny_quadrature", cfg.sweep.ny_quadrature}};
  j["surrogate"] = {
      {"backend", surrogate_backend_name(cfg.surrogate.backend)},
      {"replay_path", cfg.surrogate.replay_path},
      {"frames_per_period", cfg.surrogate.frames_per_period},
      {"fluctuation_eps", cfg.surrogate.fluctuation_eps},
      {"remote",
       {{"endpoint", cfg.surrogate.remote.endpoint},
        {"timeout_s", cfg.surrogate.remote.timeout_s},
        {"max_attempts", cfg.surrogate.remote.max_attempts},
        {"backoff_base_s", cfg.surrogate.remote.backoff_base_s}}}};
  j["llm"] = {{"kind", llm_backend_name(cfg.llm.kind)},
              {"base_url", cfg.llm.base_url},
              {"model", cfg.llm.model},
              {"temperature", cfg.llm.temperature},
              {"max_tokens", cfg.llm.max_tokens}};
  return j;
}

namespace detail {

inline void check_known_keys(const nlohmann::json& j,
                             std::initializer_list<const char*> known,
                             const char* where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool ok = false;
    for (const char* k : known)
      if (key == k) ok = true;
    if (!ok)
      throw FormatError(std::string("unknown key '") + key + "' in " + where);
  }
}

}  // namespace detail

/// Builds a config from a JSON object; absent keys keep their defaults and
/// unknown keys are rejected so typos fail loudly.
inline CampaignConfig campaign_config_from_json(const nlohmann::json& j) {
  if (!j.is_object())
    throw FormatError("campaign config must be a JSON object");
  detail::check_known_keys(
      j,
      {"metric", "spacing_min", "spacing_max", "window_width",
       "max_iterations", "geometry_tolerance", "n_frames", "retry_budget",
       "master_seed", "out_dir", "sweep", "surrogate", "llm"},
      "campaign config");
  CampaignConfig cfg;
  try {
    if (j.contains("metric"))
      cfg.mode = metric_mode_from_name(j["metric"].get<std::string>());
    if (j.contains("spacing_min"))
      cfg.spacing_min = j["spacing_min"].get<double>();
    if (j.contains("spacing_max"))
      cfg.spacing_max = j["spacing_max"].get<double>();
    if (j.contains("window_width"))
      cfg.window_width = j["window_width"].get<double>();
    if (j.contains("max_iterations"))
      cfg.max_iterations = j["max_iterations"].get<int>();
    if (j.contains("geometry_tolerance"))
      cfg.geometry_tolerance = j["geometry_tolerance"].get<double>();
    if (j.contains("n_frames")) cfg.n_frames = j["n_frames"].get<int>();
    if (j.contains("retry_budget"))
      cfg.retry_budget = j["retry_budget"].get<int>();
    if (j.contains("master_seed"))
      cfg.master_seed = j["master_seed"].get<std::uint64_t>();
    if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("sweep")) {
      const auto& s = j["sweep"];
      detail::check_known_keys(
          s, {"x_start", "x_end_offset", "step", "ny_quadrature"}, "sweep");
      if (s.contains("x_start")) cfg.sweep.x_start = s["x_start"].get<double>();
      if (s.contains("x_end_offset"))
        cfg.sweep.x_end_offset = s["x_end_offset"].get<double>();
      if (s.contains("step")) cfg.sweep.step = s["step"].get<double>();
      if (s.contains("ny_quadrature"))
        cfg.sweep.ny_quadrature = s["ny_quadrature"].get<int>();
    }
    if (j.contains("surrogate")) {
      const auto& s = j["surrogate"];
      detail::check_known_keys(s,
                               {"backend", "replay_path", "frames_per_period",
                                "fluctuation_eps", "remote"},
                               "surrogate");
      if (s.contains("backend"))
        cfg.surrogate.backend =
            surrogate_backend_from_name(s["backend"].get<std::string>());
      if (s.contains("replay_path"))
        cfg.surrogate.replay_path = s["replay_path"].get<std::string>();
      if (s.contains("frames_per_period"))
        cfg.surrogate.frames_per_period = s["frames_per_period"].get<int>();
      if (s.contains("fluctuation_eps"))
        cfg.surrogate.fluctuation_eps = s["fluctuation_eps"].get<double>();
      if (s.contains("remote")) {
        const auto& r = s["remote"];
        detail::check_known_keys(
            r, {"endpoint", "timeout_s", "max_attempts", "backoff_base_s"},
            "surrogate.remote");
        if (r.contains("endpoint"))
          cfg.surrogate.remote.endpoint = r["endpoint"].get<std::string>();
        if (r.contains("timeout_s"))
          cfg.surrogate.remote.timeout_s = r["timeout_s"].get<double>();
        if (r.contains("max_attempts"))
          cfg.surrogate.remote.max_attempts = r["max_attempts"].get<int>();
        if (r.contains("backoff_base_s"))
          cfg.surrogate.remote.backoff_base_s =
              r["backoff_base_s"].get<double>();
      }
    }
    if (j.contains("llm")) {
      const auto& l = j["llm"];
      detail::check_known_keys(
          l, {"kind", "base_url", "model", "temperature", "max_tokens"},
          "llm");
      if (l.contains("kind"))
        cfg.llm.kind = llm_backend_from_name(l["kind"].get<std::string>());
      if (l.contains("base_url"))
        cfg.llm.base_url = l["base_url"].get<std::string>();
      if (l.contains("model")) cfg.llm.model = l["model"].get<std::string>();
      if (l.contains("temperature"))
        cfg.llm.temperature = l["temperature"].get<double>();
      if (l.contains("max_tokens"))
        cfg.llm.max_tokens = l["max_tokens"].get<int>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("campaign config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("campaign config: ") + e.what());
  }
  return cfg;
}

/// Interval of spacings. Interior windows are half-open; the last one closes
/// at the range end so the partition covers the whole range.
struct Window {
  double lo = 0.0;
  double hi = 0.0;
  bool closed_end = false;

  double width() const { return hi - lo; }
  bool contains(double s) const {
    return closed_end ? (s >= lo && s <= hi) : (s >= lo && s < hi);
  }
};

inline std::vector<Window> partition_windows(double lo, double hi,
                                             double width) {
  if (!(width > 0.0))
    throw std::invalid_argument("partition_windows: width must be positive");
  if (!(hi > lo))
    throw std::invalid_argument("partition_windows: empty range");
  const int count = static_cast<int>(
      std::max<long long>(1, std::llround((hi - lo) / width)));
  std::vector<Window> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Window w;
    w.lo = lo + width * i;
    w.closed_end = i + 1 == count;
    w.hi = w.closed_end ? hi : lo + width * (i + 1);
    out.push_back(w);
  }
  return out;
}

enum class WindowStatus { covered, gap, exhausted };

inline const char* window_status_name(WindowStatus s) {
  switch (s) {
    case WindowStatus::covered: return "covered";
    case WindowStatus::gap: return "gap";
    case WindowStatus::exhausted: return "exhausted";
  }
  return "?";
}

/// A spacing the Analyst attempted but that produced no rows (the surrogate
/// rejected the request). Counts toward the window's retry budget.
struct FailedAttempt {
  double spacing = 0.0;
  int iteration = 0;
};

/// Window coverage from the evidence rows. A window is covered once any
/// spacing inside it has geometrically valid rows; it is exhausted when every
/// attempt inside it failed and the attempt count has reached the retry
/// budget; otherwise it is a gap.
inline std::vector<WindowStatus> coverage_status(
    const std::vector<ResultRow>& rows, const std::vector<Window>& windows,
    int retry_budget, const std::vector<FailedAttempt>& failed = {}) {
  std::vector<WindowStatus> out(windows.size(), WindowStatus::gap);
  for (std::size_t wi = 0; wi < windows.size(); ++wi) {
    const Window& w = windows[wi];
    bool any_valid = false;
    std::set<std::pair<int, double>> failed_attempts;
    for (const ResultRow& r : rows) {
      if (!w.contains(r.spacing)) continue;
      if (r.geom_valid)
        any_valid = true;
      else
        failed_attempts.insert({r.iteration, r.spacing});
    }
    int n_failed = static_cast<int>(failed_attempts.size());
    for (const FailedAttempt& f : failed)
      if (w.contains(f.spacing)) ++n_failed;
    if (any_valid)
      out[wi] = WindowStatus::covered;
    else if (n_failed > 0 && n_failed >= retry_budget)
      out[wi] = WindowStatus::exhausted;
  }
  return out;
}

enum class CampaignStatus { running, solved, budget_exhausted, aborted };

inline const char* campaign_status_name(CampaignStatus s) {
  switch (s) {
    case CampaignStatus::running: return "running";
    case CampaignStatus::solved: return "solved";
    case CampaignStatus::budget_exhausted: return "budget_exhausted";
    case CampaignStatus::aborted: return "aborted";
  }
  return "?";
}

inline CampaignStatus campaign_status_from_name(const std::string& name) {
  if (name == "running") return CampaignStatus::running;
  if (name == "solved") return CampaignStatus::solved;
  if (name == "budget_exhausted") return CampaignStatus::budget_exhausted;
  if (name == "aborted") return CampaignStatus::aborted;
  throw std::invalid_argument("unknown campaign status: " + name);
}

struct AgentMessage {
  std::string node;
  std::string event;
};

struct CampaignState {
  int iteration = 0;
  std::vector<AgentMessage> messages;
  std::string csv_path;
  CampaignStatus status = CampaignStatus::running;
  std::vector<FailedAttempt> failed_attempts;

  void log(const std::string& node, const std::string& event) {
    messages.push_back({node, event});
  }
};

inline nlohmann::json state_to_json(const CampaignState& state) {
  nlohmann::json j;
  j["iteration"] = state.iteration;
  j["csv_path"] = state.csv_path;
  j["status"] = campaign_status_name(state.status);
  nlohmann::json fails = nlohmann::json::array();
  for (const FailedAttempt& f : state.failed_attempts)
    fails.push_back({{"spacing", f.spacing}, {"iteration", f.iteration}});
  j["failed_attempts"] = fails;
  nlohmann::json msgs = nlohmann::json::array();
  for (const AgentMessage& m : state.messages)
    msgs.push_back({{"node", m.node}, {"event", m.event}});
  j["messages"] = msgs;
  return j;
}

inline CampaignState state_from_json(const nlohmann::json& j) {
  CampaignState state;
  state.iteration = j.at("iteration").get<int>();
  state.csv_path = j.at("csv_path").get<std::string>();
  state.status = campaign_status_from_name(j.at("status").get<std::string>());
  for (const auto& f : j.at("failed_attempts"))
    state.failed_attempts.push_back(
        {f.at("spacing").get<double>(), f.at("iteration").get<int>()});
  for (const auto& m : j.at("messages"))
    state.messages.push_back({m.at("node").get<std::string>(),
                              m.at("event").get<std::string>()});
  return state;
}

inline void save_state(const CampaignState& state, const std::string& path) {
  detail::write_text_atomic(path, state_to_json(state).dump(2) + "\n");
}

inline CampaignState load_state(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_state: cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded())
    throw FormatError("load_state: " + path + " is not valid JSON");
  try {
    return state_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("load_state: " + path + ": " + e.what());
  }
}

struct PlannerOutput {
  std::vector<double> suggested_ds;
  bool done = false;
};

/// Midpoint-plus-jitter suggestion for every gap window. The jitter is a
/// deterministic function of (master seed, iteration, window index) and stays
/// within the middle half of the window, so suggestions always land inside
/// their window.
inline PlannerOutput scripted_planner(const CampaignConfig& cfg,
                                      const std::vector<Window>& windows,
                                      const std::vector<WindowStatus>& cov,
                                      int iteration) {
  if (windows.size() != cov.size())
    throw std::invalid_argument("scripted_planner: coverage size mismatch");
  PlannerOutput out;
  for (std::size_t wi = 0; wi < windows.size(); ++wi) {
    if (cov[wi] != WindowStatus::gap) continue;
    const Window& w = windows[wi];
    SplitMix64 rng(mix_seed(cfg.master_seed ^ 0xC0FFEEull,
                            static_cast<std::uint64_t>(iteration),
                            static_cast<std::uint64_t>(wi)));
    const double mid = 0.5 * (w.lo + w.hi);
    const double jitter = (rng.uniform01() - 0.5) * 0.5 * w.width();
    out.suggested_ds.push_back(std::clamp(mid + jitter, w.lo, w.hi));
  }
  out.done = out.suggested_ds.empty();
  return out;
}

namespace detail {

inline std::string coverage_prompt_block(
    const std::vector<Window>& windows, const std::vector<WindowStatus>& cov,
    const std::vector<ResultRow>& rows, const MetricMode& mode) {
  std::string s = "Window statuses:\n";
  for (std::size_t wi = 0; wi < windows.size(); ++wi) {
    s += "  window " + std::to_string(wi) + ": [" +
         format_g9(windows[wi].lo) + ", " + format_g9(windows[wi].hi) +
         (windows[wi].closed_end ? "]" : ")");
    s += " status=";
    s += window_status_name(cov[wi]);
    s += "\n";
  }
  std::vector<ResultRow> valid;
  for (const ResultRow& r : rows)
    if (r.geom_valid) valid.push_back(r);
  if (!valid.empty()) {
    s += "Best station per evaluated spacing:\n";
    for (const OptimumPoint& o : best_per_spacing(valid, mode))
      s += "  S=" + format_g9(o.spacing) + " x*=" + format_g9(o.x_star) +
           " value=" + format_g9(o.value) + "\n";
  }
  return s;
}

inline std::optional<PlannerOutput> parse_planner_json(
    const nlohmann::json& j) {
  if (!j.is_object()) return std::nullopt;
  if (!j.contains("suggested_ds") || !j["suggested_ds"].is_array())
    return std::nullopt;
  if (!j.contains("done") || !j["done"].is_boolean()) return std::nullopt;
  PlannerOutput out;
  for (const auto& v : j["suggested_ds"]) {
    if (!v.is_number()) return std::nullopt;
    out.suggested_ds.push_back(v.get<double>());
  }
  out.done = j["done"].get<bool>();
  return out;
}

}  // namespace detail

/// One planning turn. With the scripted backend (or no client) the output is
/// pure bookkeeping. With a remote backend the model is prompted with the
/// coverage table; replies must be JSON with suggested_ds and done. Two
/// re-prompts are allowed, then the scripted suggestion is used and the
/// fallback is logged. Off-window suggestions are dropped; if that leaves
/// gaps unserved the planner also falls back.
inline PlannerOutput planner_step(CampaignState& state,
                                  const CampaignConfig& cfg,
                                  const std::vector<Window>& windows,
                                  const std::vector<WindowStatus>& cov,
                                  const std::vector<ResultRow>& rows,
                                  LlmClient* client = nullptr) {
  const bool any_gap =
      std::any_of(cov.begin(), cov.end(),
                  [](WindowStatus s) { return s == WindowStatus::gap; });
  const PlannerOutput scripted =
      scripted_planner(cfg, windows, cov, state.iteration);
  if (cfg.llm.kind == LlmBackendKind::scripted || client == nullptr) {
    state.log("planner", "scripted suggestions=" +
                             std::to_string(scripted.suggested_ds.size()));
    return scripted;
  }

  std::vector<ChatMessage> messages;
  messages.push_back(
      {"system",
       "You are the Planner in an autonomous wake-exploration campaign over "
       "tandem-cylinder spacings S (in diameters). Suggest exactly one new "
       "spacing inside each window whose status is gap; spacings must lie "
       "inside the window. Reply with JSON only, of the form "
       "{\"suggested_ds\": [numbers], \"done\": boolean}. done is true only "
       "when no gap windows remain."});
  messages.push_back(
      {"user", detail::coverage_prompt_block(windows, cov, rows, cfg.mode)});

  for (int attempt = 0; attempt < 3; ++attempt) {
    std::string reply;
    try {
      reply = client->complete(messages);
    } catch (const RemoteError&) {
      state.log("planner", "llm_fallback reason=unreachable");
      return scripted;
    }
    const auto obj = extract_json_object(reply);
    const auto parsed =
        obj ? detail::parse_planner_json(*obj) : std::nullopt;
    if (parsed) {
      PlannerOutput out;
      for (double s : parsed->suggested_ds) {
        bool in_gap = false;
        for (std::size_t wi = 0; wi < windows.size(); ++wi)
          if (cov[wi] == WindowStatus::gap && windows[wi].contains(s))
            in_gap = true;
        if (in_gap && s >= cfg.spacing_min && s <= cfg.spacing_max)
          out.suggested_ds.push_back(s);
        else
          state.log("planner",
                    "dropped off-window suggestion S=" + format_g9(s));
      }
      if (any_gap && out.suggested_ds.empty()) {
        state.log("planner", "llm_fallback reason=no_usable_suggestions");
        return scripted;
      }
      out.done = !any_gap;
      state.log("planner", "remote suggestions=" +
                               std::to_string(out.suggested_ds.size()));
      return out;
    }
    messages.push_back({"assistant", reply});
    messages.push_back(
        {"user",
         "That reply was not a JSON object with suggested_ds (array of "
         "numbers) and done (boolean). Reply with JSON only."});
  }
  state.log("planner", "llm_fallback reason=invalid_json");
  return scripted;
}

struct AnalystOutcome {
  std::vector<ResultRow> new_rows;
  std::vector<double> skipped;
  std::vector<double> failed;
  bool aborted = false;
  std::string abort_reason;
};

/// Evaluates each suggested spacing: frames from the surrogate, mean field,
/// geometry check, probe sweep, one row per station. Spacings whose window is
/// already covered are skipped. A surrogate rejection records a row-less
/// failed attempt; an unreachable remote backend aborts the campaign.
inline AnalystOutcome analyst_step(std::vector<double> suggestions,
                                   const CampaignConfig& cfg,
                                   const Surrogate& surrogate,
                                   CampaignState& state,
                                   const std::vector<ResultRow>& existing,
                                   const std::vector<Window>& windows) {
  std::sort(suggestions.begin(), suggestions.end());
  AnalystOutcome outcome;
  std::vector<ResultRow> accumulated = existing;

  for (const double spacing : suggestions) {
    const auto cov = coverage_status(accumulated, windows, cfg.retry_budget,
                                     state.failed_attempts);
    bool covered = false;
    for (std::size_t wi = 0; wi < windows.size(); ++wi)
      if (windows[wi].contains(spacing) && cov[wi] == WindowStatus::covered)
        covered = true;
    if (covered) {
      outcome.skipped.push_back(spacing);
      state.log("analyst", "skip_covered S=" + format_g9(spacing));
      continue;
    }

    const std::uint64_t seed = mix_seed(cfg.master_seed, double_bits(spacing));
    std::vector<Frame> frames;
    try {
      frames = surrogate.generate(spacing, cfg.n_frames, seed);
    } catch (const RemoteError& e) {
      if (e.kind() == RemoteError::Kind::unavailable) {
        outcome.aborted = true;
        outcome.abort_reason = e.what();
        state.log("analyst", std::string("abort reason=") + e.what());
        return outcome;
      }
      outcome.failed.push_back(spacing);
      state.log("analyst", "attempt_failed S=" + format_g9(spacing) +
                               " reason=" + e.what());
      continue;
    } catch (const std::invalid_argument& e) {
      outcome.failed.push_back(spacing);
      state.log("analyst", "attempt_failed S=" + format_g9(spacing) +
                               " reason=" + e.what());
      continue;
    } catch (const std::domain_error& e) {
      outcome.failed.push_back(spacing);
      state.log("analyst", "attempt_failed S=" + format_g9(spacing) +
                               " reason=" + e.what());
      continue;
    }

    const MeanField mean = time_average(frames, spacing);
    const GeometryEstimate geom =
        estimate_geometry(mean, spacing, cfg.geometry_tolerance);

    std::vector<ProbeResult> probes;
    if (surrogate.is_analytic()) {
      const auto source = [&](double x_p) {
        return surrogate.profile(spacing, x_p, cfg.sweep.ny_quadrature);
      };
      probes = sweep_probes(source, spacing, cfg.sweep, cfg.mode, geom);
    } else {
      const auto source = [&](double x_p) {
        return extract_profile(mean, x_p);
      };
      probes = sweep_probes(source, spacing, cfg.sweep, cfg.mode, geom);
    }

    for (const ProbeResult& p : probes) {
      ResultRow r;
      r.iteration = state.iteration;
      r.spacing = p.spacing;
      r.x_p = p.x_p;
      r.delta_star = p.metrics.delta_star;
      r.theta = p.metrics.theta;
      r.e_l2 = p.metrics.e_l2;
      r.e_cos = p.metrics.e_cos;
      r.j = p.metrics.j;
      r.cyl1_error_d = geom.cyl1_error_D;
      r.cyl2_error_d = geom.cyl2_error_D;
      r.geom_valid = geom.valid;
      r.seed = seed;
      outcome.new_rows.push_back(r);
      accumulated.push_back(r);
    }
    state.log("analyst", "evaluated S=" + format_g9(spacing) + " rows=" +
                             std::to_string(probes.size()) +
                             (geom.valid ? "" : " geom_invalid"));
  }

  std::sort(outcome.new_rows.begin(), outcome.new_rows.end(),
            [](const ResultRow& a, const ResultRow& b) {
              return a.spacing != b.spacing ? a.spacing < b.spacing
                                            : a.x_p < b.x_p;
            });
  return outcome;
}

enum class CriticStatus { solved, needs_refinement };

struct CriticVerdict {
  CriticStatus status = CriticStatus::needs_refinement;
  std::vector<int> refinements;  // indices of windows still to work
  std::vector<double> invalid_spacings;
  std::vector<std::string> grounding_violations;
};

namespace detail {

/// Validity is recomputed from the stored geometry error columns; the stored
/// flag is never trusted.
inline std::vector<ResultRow> recheck_validity(std::vector<ResultRow> rows,
                                               double tolerance,
                                               CampaignState* state) {
  for (ResultRow& r : rows) {
    const bool valid = std::isfinite(r.cyl1_error_d) &&
                       std::isfinite(r.cyl2_error_d) &&
                       r.cyl1_error_d <= tolerance &&
                       r.cyl2_error_d <= tolerance;
    if (valid != r.geom_valid && state)
      state->log("critic", "validity_mismatch S=" + format_g9(r.spacing) +
                               " x_p=" + format_g9(r.x_p));
    r.geom_valid = valid;
  }
  return rows;
}

struct BestClaim {
  double spacing = 0.0;
  double x_p = 0.0;
  double value = 0.0;
};

struct ParsedVerdict {
  CriticStatus status = CriticStatus::needs_refinement;
  std::vector<int> refinements;
  std::vector<double> invalid_spacings;
  std::optional<BestClaim> best;
};

inline std::optional<ParsedVerdict> parse_critic_json(
    const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("status") || !j["status"].is_string())
    return std::nullopt;
  ParsedVerdict v;
  const std::string status = j["status"].get<std::string>();
  if (status == "solved")
    v.status = CriticStatus::solved;
  else if (status == "needs_refinement")
    v.status = CriticStatus::needs_refinement;
  else
    return std::nullopt;
  if (j.contains("refinements")) {
    if (!j["refinements"].is_array()) return std::nullopt;
    for (const auto& r : j["refinements"]) {
      if (!r.is_number_integer()) return std::nullopt;
      v.refinements.push_back(r.get<int>());
    }
  }
  if (j.contains("invalid_spacings")) {
    if (!j["invalid_spacings"].is_array()) return std::nullopt;
    for (const auto& s : j["invalid_spacings"]) {
      if (!s.is_number()) return std::nullopt;
      v.invalid_spacings.push_back(s.get<double>());
    }
  }
  if (j.contains("best")) {
    const auto& b = j["best"];
    if (!b.is_object() || !b.contains("spacing") || !b.contains("x_p") ||
        !b.contains("value") || !b["spacing"].is_number() ||
        !b["x_p"].is_number() || !b["value"].is_number())
      return std::nullopt;
    v.best = BestClaim{b["spacing"].get<double>(), b["x_p"].get<double>(),
                       b["value"].get<double>()};
  }
  return v;
}

inline std::optional<nlohmann::json> tool_request(const nlohmann::json& j) {
  if (j.is_object() && j.contains("tool") && j["tool"].is_string() &&
      j["tool"].get<std::string>() == "read_csv")
    return j;
  return std::nullopt;
}

inline std::string csv_tool_result(const std::vector<ResultRow>& rows,
                                   int max_rows) {
  std::string s = "TOOL RESULT read_csv\n";
  s += csv_header();
  s += "\n";
  const int n = std::min<int>(max_rows, static_cast<int>(rows.size()));
  for (int i = 0; i < n; ++i) s += format_row(rows[i]) + "\n";
  if (n < static_cast<int>(rows.size()))
    s += "... (" + std::to_string(rows.size() - n) + " more rows)\n";
  return s;
}

}  // namespace detail

/// Critic verdict. Validity and coverage are always recomputed from the rows;
/// a remote backend may browse the CSV through a bounded read_csv tool loop
/// and assert a best value, which is recomputed and must match to 1e-9.
/// Solved means every window is covered or exhausted, or the iteration budget
/// is spent; any grounding violation forces needs_refinement.
inline CriticVerdict critic_step(CampaignState& state,
                                 const CampaignConfig& cfg,
                                 const std::vector<Window>& windows,
                                 const std::vector<ResultRow>& raw_rows,
                                 LlmClient* client = nullptr) {
  const std::vector<ResultRow> rows =
      detail::recheck_validity(raw_rows, cfg.geometry_tolerance, &state);
  const auto cov =
      coverage_status(rows, windows, cfg.retry_budget, state.failed_attempts);

  CriticVerdict verdict;
  for (std::size_t wi = 0; wi < cov.size(); ++wi)
    if (cov[wi] == WindowStatus::gap)
      verdict.refinements.push_back(static_cast<int>(wi));

  std::map<double, bool> spacing_valid;
  for (const ResultRow& r : rows) {
    auto [it, inserted] = spacing_valid.emplace(r.spacing, r.geom_valid);
    if (!inserted) it->second = it->second || r.geom_valid;
  }
  for (const auto& [s, valid] : spacing_valid)
    if (!valid) verdict.invalid_spacings.push_back(s);

  if (cfg.llm.kind == LlmBackendKind::remote && client != nullptr) {
    std::vector<ChatMessage> messages;
    messages.push_back(
        {"system",
         "You are the Critic in an autonomous wake-exploration campaign. "
         "Inspect the evidence and reply with JSON only: {\"status\": "
         "\"solved\"|\"needs_refinement\", \"refinements\": [window "
         "indices], \"invalid_spacings\": [numbers]}. You may include "
         "\"best\": {\"spacing\", \"x_p\", \"value\"} for the best station "
         "found so far. To read the evidence table first, reply "
         "{\"tool\": \"read_csv\", \"args\": {\"max_rows\": N}}."});
    messages.push_back({"user", detail::coverage_prompt_block(
                                    windows, cov, rows, cfg.mode)});

    int tool_calls = 0;
    int bad_replies = 0;
    while (true) {
      std::string reply;
      try {
        reply = client->complete(messages);
      } catch (const RemoteError&) {
        state.log("critic", "llm_fallback reason=unreachable");
        break;
      }
      const auto obj = extract_json_object(reply);
      if (obj) {
        if (const auto tool = detail::tool_request(*obj)) {
          if (tool_calls >= 8) {
            ++bad_replies;
            if (bad_replies > 2) {
              state.log("critic", "llm_fallback reason=tool_budget");
              break;
            }
            state.log("critic", "tool_budget_exhausted");
            messages.push_back({"assistant", reply});
            messages.push_back(
                {"user",
                 "Tool budget exhausted; reply with the verdict JSON now."});
            continue;
          }
          ++tool_calls;
          int max_rows = 50;
          if (tool->contains("args") && (*tool)["args"].is_object() &&
              (*tool)["args"].contains("max_rows") &&
              (*tool)["args"]["max_rows"].is_number_integer())
            max_rows = (*tool)["args"]["max_rows"].get<int>();
          messages.push_back({"assistant", reply});
          messages.push_back(
              {"user", detail::csv_tool_result(
                           rows, std::max(0, max_rows))});
          state.log("critic", "tool read_csv max_rows=" +
                                  std::to_string(max_rows));
          continue;
        }
        if (const auto parsed = detail::parse_critic_json(*obj)) {
          if (parsed->best) {
            const detail::BestClaim& claim = *parsed->best;
            std::vector<ProbeResult> at_spacing;
            for (const ResultRow& r : rows) {
              if (!r.geom_valid ||
                  std::abs(r.spacing - claim.spacing) > 1e-9)
                continue;
              ProbeResult pr;
              pr.spacing = r.spacing;
              pr.x_p = r.x_p;
              pr.metrics.delta_star = r.delta_star;
              pr.metrics.theta = r.theta;
              at_spacing.push_back(pr);
            }
            if (at_spacing.empty()) {
              verdict.grounding_violations.push_back(
                  "best claim cites unevaluated spacing " +
                  format_g9(claim.spacing));
            } else {
              const OptimumPoint o = find_extremum(at_spacing, cfg.mode);
              if (std::abs(o.x_star - claim.x_p) > 1e-9 ||
                  std::abs(o.value - claim.value) > 1e-9)
                verdict.grounding_violations.push_back(
                    "best claim (" + format_g9(claim.x_p) + ", " +
                    format_g9(claim.value) + ") at S=" +
                    format_g9(claim.spacing) + " recomputes to (" +
                    format_g9(o.x_star) + ", " + format_g9(o.value) + ")");
            }
            for (const std::string& v : verdict.grounding_violations)
              state.log("critic", "grounding_violation " + v);
          }
          state.log("critic", "remote verdict parsed");
          break;
        }
      }
      ++bad_replies;
      if (bad_replies > 2) {
        state.log("critic", "llm_fallback reason=invalid_json");
        break;
      }
      messages.push_back({"assistant", reply});
      messages.push_back(
          {"user",
           "That reply was not a valid verdict or tool request. Reply with "
           "JSON only."});
    }
  }

  const bool coverage_done =
      std::none_of(cov.begin(), cov.end(),
                   [](WindowStatus s) { return s == WindowStatus::gap; });
  if (!verdict.grounding_violations.empty())
    verdict.status = CriticStatus::needs_refinement;
  else if (coverage_done || state.iteration >= cfg.max_iterations)
    verdict.status = CriticStatus::solved;
  else
    verdict.status = CriticStatus::needs_refinement;
  state.log("critic",
            std::string("verdict=") +
                (verdict.status == CriticStatus::solved
                     ? "solved"
                     : "needs_refinement") +
                " gaps=" + std::to_string(verdict.refinements.size()));
  return verdict;
}

enum class NextNode { planner, writer };

inline NextNode route(const CampaignState& state, const CampaignConfig& cfg,
                      const CriticVerdict& verdict, bool csv_nonempty) {
  if (verdict.status == CriticStatus::solved && csv_nonempty)
    return NextNode::writer;
  if (state.iteration >= cfg.max_iterations && csv_nonempty)
    return NextNode::writer;
  return NextNode::planner;
}

/// Deterministic report generation from the CSV alone.
inline ReportArtifacts writer_step(const CampaignState& state,
                                   const CampaignConfig& cfg) {
  const std::vector<ResultRow> rows = read_result_csv(state.csv_path);
  if (rows.empty())
    throw std::invalid_argument("writer_step: evidence CSV is empty");
  return generate_report(rows, cfg.mode, cfg.out_dir);
}

struct CampaignArtifacts {
  std::string csv_path;
  std::string state_path;
  std::string log_path;
  std::optional<ReportArtifacts> report;
  CampaignState state;
};

namespace detail {

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class CampaignLogger {
 public:
  explicit CampaignLogger(const std::string& path)
      : out_(path, std::ios::binary | std::ios::app) {}

  void write(const std::string& node, const std::string& event) {
    if (!out_) return;
    nlohmann::json line = {
        {"ts", utc_timestamp()}, {"node", node}, {"event", event}};
    out_ << line.dump() << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
};

}  // namespace detail

/// Runs the Planner -> Analyst -> Critic loop until the router hands off to
/// the Writer (or the budget runs out with no evidence). With resume = true
/// an existing state file continues an aborted campaign; otherwise the output
/// directory starts fresh. With the scripted backend the produced CSV is a
/// deterministic function of (config, seed).
inline CampaignArtifacts run_campaign(const CampaignConfig& cfg,
                                      bool resume = false) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  const auto path = [&](const char* name) {
    return (std::filesystem::path(cfg.out_dir) / name).string();
  };

  CampaignArtifacts art;
  art.csv_path = path("evidence.csv");
  art.state_path = path("state.json");
  art.log_path = path("campaign_log.jsonl");

  CampaignState state;
  state.csv_path = art.csv_path;
  if (resume && std::filesystem::exists(art.state_path)) {
    state = load_state(art.state_path);
    state.status = CampaignStatus::running;
  } else {
    std::filesystem::remove(art.csv_path);
    std::filesystem::remove(art.state_path);
    std::filesystem::remove(art.log_path);
    append_rows_atomic(art.csv_path, {});  // header-only file
  }

  detail::CampaignLogger logger(art.log_path);
  const auto log = [&](const std::string& node, const std::string& event) {
    state.log(node, event);
    logger.write(node, event);
  };
  // Route per-step logs through the JSONL sink as well.
  const auto flush_new_messages = [&](std::size_t from) {
    for (std::size_t i = from; i < state.messages.size(); ++i)
      logger.write(state.messages[i].node, state.messages[i].event);
  };

  SurrogateSpec surrogate_spec = cfg.surrogate;
  surrogate_spec.spacing_min = cfg.spacing_min;
  surrogate_spec.spacing_max = cfg.spacing_max;
  const Surrogate surrogate(surrogate_spec);
  std::optional<LlmClient> client;
  if (cfg.llm.kind == LlmBackendKind::remote) {
    LlmOptions opt = LlmClient::from_env(cfg.llm.model);
    if (!cfg.llm.base_url.empty()) opt.base_url = cfg.llm.base_url;
    opt.temperature = cfg.llm.temperature;
    opt.max_tokens = cfg.llm.max_tokens;
    client.emplace(opt);
  }

  const auto windows =
      partition_windows(cfg.spacing_min, cfg.spacing_max, cfg.window_width);
  log("campaign", "start windows=" + std::to_string(windows.size()) +
                      " metric=" + detail::metric_name(cfg.mode));

  while (state.iteration < cfg.max_iterations) {
    ++state.iteration;
    std::vector<ResultRow> rows = read_result_csv(art.csv_path);
    rows = detail::recheck_validity(rows, cfg.geometry_tolerance, nullptr);
    const auto cov = coverage_status(rows, windows, cfg.retry_budget,
                                     state.failed_attempts);

    std::size_t mark = state.messages.size();
    const PlannerOutput plan = planner_step(
        state, cfg, windows, cov, rows, client ? &*client : nullptr);
    const AnalystOutcome outcome = analyst_step(
        plan.suggested_ds, cfg, surrogate, state, rows, windows);
    if (!outcome.new_rows.empty())
      append_rows_atomic(art.csv_path, outcome.new_rows);
    for (const double s : outcome.failed)
      state.failed_attempts.push_back({s, state.iteration});
    if (outcome.aborted) {
      state.status = CampaignStatus::aborted;
      flush_new_messages(mark);
      logger.write("campaign", "aborted: " + outcome.abort_reason);
      save_state(state, art.state_path);
      throw RemoteError(RemoteError::Kind::unavailable,
                        "campaign aborted: " + outcome.abort_reason);
    }

    const std::vector<ResultRow> all_rows = read_result_csv(art.csv_path);
    const CriticVerdict verdict = critic_step(
        state, cfg, windows, all_rows, client ? &*client : nullptr);
    flush_new_messages(mark);

    const NextNode next = route(state, cfg, verdict, !all_rows.empty());
    if (next == NextNode::writer) {
      state.status = verdict.status == CriticStatus::solved
                         ? CampaignStatus::solved
                         : CampaignStatus::budget_exhausted;
      save_state(state, art.state_path);
      art.report = writer_step(state, cfg);
      log("writer", "report=" + art.report->report_path);
      save_state(state, art.state_path);
      art.state = state;
      return art;
    }
    save_state(state, art.state_path);
  }

  // Iteration budget spent with an empty evidence table.
  state.status = CampaignStatus::budget_exhausted;
  save_state(state, art.state_path);
  log("campaign", "stopped without evidence");
  art.state = state;
  return art;
}

}  // namespace wake
