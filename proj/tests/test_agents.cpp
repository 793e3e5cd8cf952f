#include "wake/agents.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <unistd.h>

#include "stub_http.hpp"

namespace {

using wake::AnalystOutcome;
using wake::CampaignConfig;
using wake::CampaignState;
using wake::CampaignStatus;
using wake::CriticStatus;
using wake::CriticVerdict;
using wake::FailedAttempt;
using wake::LlmBackendKind;
using wake::LlmClient;
using wake::LlmOptions;
using wake::MetricMode;
using wake::NextNode;
using wake::PlannerOutput;
using wake::ResultRow;
using wake::Window;
using wake::WindowStatus;

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("wake_agents_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  EXPECT_TRUE(in.good()) << path;
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

bool has_message(const CampaignState& state, const std::string& node,
                 const std::string& needle) {
  for (const auto& m : state.messages)
    if (m.node == node && m.event.find(needle) != std::string::npos)
      return true;
  return false;
}

ResultRow valid_row(double spacing, double x_p, int iteration = 1) {
  ResultRow r;
  r.iteration = iteration;
  r.spacing = spacing;
  r.x_p = x_p;
  r.delta_star = 0.4;
  r.theta = 0.3;
  r.cyl1_error_d = 0.01;
  r.cyl2_error_d = 0.02;
  r.geom_valid = true;
  r.seed = 1;
  return r;
}

ResultRow invalid_row(double spacing, double x_p, int iteration = 1) {
  ResultRow r = valid_row(spacing, x_p, iteration);
  r.cyl2_error_d = std::numeric_limits<double>::infinity();
  r.geom_valid = false;
  return r;
}

TEST(PartitionWindows, SevenWindowsOverTheCampaignRange) {
  const auto windows = wake::partition_windows(3.5, 10.0, 1.0);
  ASSERT_EQ(windows.size(), 7u);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    EXPECT_NEAR(windows[i].lo, 3.5 + static_cast<double>(i), 1e-12);
    EXPECT_EQ(windows[i].closed_end, i == 6);
  }
  EXPECT_NEAR(windows[5].hi, 9.5, 1e-12);
  EXPECT_DOUBLE_EQ(windows[6].hi, 10.0);

  EXPECT_TRUE(windows[0].contains(3.5));
  EXPECT_FALSE(windows[0].contains(4.5));
  EXPECT_TRUE(windows[1].contains(4.5));
  EXPECT_TRUE(windows[6].contains(10.0));
  EXPECT_FALSE(windows[6].contains(10.0 + 1e-9));
}

TEST(PartitionWindows, DegenerateRangeAndErrors) {
  const auto one = wake::partition_windows(0.0, 1.0, 2.0);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_DOUBLE_EQ(one[0].lo, 0.0);
  EXPECT_DOUBLE_EQ(one[0].hi, 1.0);
  EXPECT_TRUE(one[0].closed_end);

  EXPECT_THROW(wake::partition_windows(0.0, 1.0, 0.0),
               std::invalid_argument);
  EXPECT_THROW(wake::partition_windows(0.0, 1.0, -1.0),
               std::invalid_argument);
  EXPECT_THROW(wake::partition_windows(2.0, 2.0, 1.0),
               std::invalid_argument);
}

TEST(CoverageStatus, EmptyEvidenceLeavesAllGaps) {
  const auto windows = wake::partition_windows(3.5, 10.0, 1.0);
  const auto cov = wake::coverage_status({}, windows, 2);
  for (const WindowStatus s : cov) EXPECT_EQ(s, WindowStatus::gap);
}

TEST(CoverageStatus, ValidSpacingCoversItsWindow) {
  const auto windows = wake::partition_windows(3.5, 10.0, 1.0);
  const auto cov =
      wake::coverage_status({valid_row(5.0, 0.5)}, windows, 2);
  EXPECT_EQ(cov[0], WindowStatus::gap);
  EXPECT_EQ(cov[1], WindowStatus::covered);  // [4.5, 5.5)
  EXPECT_EQ(cov[2], WindowStatus::gap);
}

TEST(CoverageStatus, RetryBudgetExhaustsAWindow) {
  const auto windows = wake::partition_windows(3.5, 10.0, 1.0);

  // One failed attempt: still a gap at budget 2.
  auto cov = wake::coverage_status({invalid_row(6.0, 0.5, 1)}, windows, 2);
  EXPECT_EQ(cov[2], WindowStatus::gap);

  // Second failed attempt at another iteration: exhausted.
  cov = wake::coverage_status(
      {invalid_row(6.0, 0.5, 1), invalid_row(6.1, 0.5, 2)}, windows, 2);
  EXPECT_EQ(cov[2], WindowStatus::exhausted);

  // A row-less failed attempt counts toward the same budget.
  cov = wake::coverage_status({invalid_row(6.0, 0.5, 1)}, windows, 2,
                              {FailedAttempt{6.2, 2}});
  EXPECT_EQ(cov[2], WindowStatus::exhausted);

  // A valid spacing wins over any number of failures.
  cov = wake::coverage_status(
      {invalid_row(6.0, 0.5, 1), invalid_row(6.1, 0.5, 2),
       valid_row(6.3, 0.5, 3)},
      windows, 2);
  EXPECT_EQ(cov[2], WindowStatus::covered);
}

CampaignConfig scripted_config(const std::string& out_dir) {
  CampaignConfig cfg;
  cfg.out_dir = out_dir;
  cfg.master_seed = 2024;
  return cfg;
}

TEST(ScriptedPlanner, SuggestsInsideEachGapWindow) {
  const auto windows = wake::partition_windows(3.5, 10.0, 1.0);
  std::vector<WindowStatus> cov(windows.size(), WindowStatus::covered);
  cov[0] = WindowStatus::gap;
  cov[4] = WindowStatus::gap;

  TempDir dir;
  const CampaignConfig cfg = scripted_config(dir.str());
  const PlannerOutput out = wake::scripted_planner(cfg, windows, cov, 1);
  ASSERT_EQ(out.suggested_ds.size(), 2u);
  EXPECT_FALSE(out.done);
  EXPECT_TRUE(windows[0].contains(out.suggested_ds[0]));
  EXPECT_TRUE(windows[4].contains(out.suggested_ds[1]));
  // Jitter stays within the middle half of the window.
  EXPECT_LE(std::abs(out.suggested_ds[0] - 4.0), 0.25 + 1e-12);
  EXPECT_LE(std::abs(out.suggested_ds[1] - 8.0), 0.25 + 1e-12);

  const PlannerOutput again = wake::scripted_planner(cfg, windows, cov, 1);
  EXPECT_EQ(out.suggested_ds, again.suggested_ds);

  const PlannerOutput later = wake::scripted_planner(cfg, windows, cov, 2);
  EXPECT_NE(out.suggested_ds, later.suggested_ds);
}

TEST(ScriptedPlanner, DoneWhenNoGapsRemain) {
  const auto windows = wake::partition_windows(3.5, 10.0, 1.0);
  std::vector<WindowStatus> cov(windows.size(), WindowStatus::covered);
  cov[3] = WindowStatus::exhausted;
  TempDir dir;
  const PlannerOutput out =
      wake::scripted_planner(scripted_config(dir.str()), windows, cov, 3);
  EXPECT_TRUE(out.done);
  EXPECT_TRUE(out.suggested_ds.empty());
}

TEST(Analyst, EmitsOneRowPerStation) {
  TempDir dir;
  CampaignConfig cfg = scripted_config(dir.str());
  const wake::Surrogate surrogate(cfg.surrogate);
  const auto windows =
      wake::partition_windows(cfg.spacing_min, cfg.spacing_max,
                              cfg.window_width);
  CampaignState state;
  state.iteration = 1;

  const AnalystOutcome outcome =
      wake::analyst_step({5.0}, cfg, surrogate, state, {}, windows);
  EXPECT_FALSE(outcome.aborted);
  EXPECT_TRUE(outcome.failed.empty());
  ASSERT_EQ(outcome.new_rows.size(),
            static_cast<std::size_t>(cfg.sweep.station_count(5.0)));
  ASSERT_EQ(outcome.new_rows.size(), 26u);

  const std::uint64_t expected_seed =
      wake::mix_seed(cfg.master_seed, wake::double_bits(5.0));
  for (std::size_t i = 0; i < outcome.new_rows.size(); ++i) {
    const ResultRow& r = outcome.new_rows[i];
    EXPECT_EQ(r.iteration, 1);
    EXPECT_DOUBLE_EQ(r.spacing, 5.0);
    EXPECT_TRUE(r.geom_valid);
    EXPECT_EQ(r.seed, expected_seed);
    if (i > 0) {
      EXPECT_GT(r.x_p, outcome.new_rows[i - 1].x_p);
    }
  }
  EXPECT_NEAR(outcome.new_rows.front().x_p, 0.5, 1e-12);
  // First station is its own error reference.
  EXPECT_DOUBLE_EQ(outcome.new_rows.front().e_l2, 0.0);
  EXPECT_DOUBLE_EQ(outcome.new_rows.front().e_cos, 0.0);
}

TEST(Analyst, SkipsSpacingsWhoseWindowIsCovered) {
  TempDir dir;
  CampaignConfig cfg = scripted_config(dir.str());
  const wake::Surrogate surrogate(cfg.surrogate);
  const auto windows =
      wake::partition_windows(cfg.spacing_min, cfg.spacing_max,
                              cfg.window_width);
  CampaignState state;
  state.iteration = 2;

  const std::vector<ResultRow> existing = {valid_row(5.2, 0.5)};
  const AnalystOutcome outcome =
      wake::analyst_step({5.4}, cfg, surrogate, state, existing, windows);
  EXPECT_TRUE(outcome.new_rows.empty());
  ASSERT_EQ(outcome.skipped.size(), 1u);
  EXPECT_DOUBLE_EQ(outcome.skipped[0], 5.4);
  EXPECT_TRUE(has_message(state, "analyst", "skip_covered"));
}

TEST(Analyst, RecordsRowlessFailedAttempts) {
  TempDir dir;
  CampaignConfig cfg = scripted_config(dir.str());
  const wake::Surrogate surrogate(cfg.surrogate);
  const auto windows =
      wake::partition_windows(cfg.spacing_min, cfg.spacing_max,
                              cfg.window_width);
  CampaignState state;
  state.iteration = 1;

  const AnalystOutcome outcome =
      wake::analyst_step({12.0}, cfg, surrogate, state, {}, windows);
  EXPECT_TRUE(outcome.new_rows.empty());
  ASSERT_EQ(outcome.failed.size(), 1u);
  EXPECT_DOUBLE_EQ(outcome.failed[0], 12.0);
  EXPECT_FALSE(outcome.aborted);
  EXPECT_TRUE(has_message(state, "analyst", "attempt_failed"));
}

TEST(Critic, RecomputesValidityFromErrorColumns) {
  TempDir dir;
  CampaignConfig cfg = scripted_config(dir.str());
  const auto windows =
      wake::partition_windows(cfg.spacing_min, cfg.spacing_max,
                              cfg.window_width);
  CampaignState state;
  state.iteration = 1;

  ResultRow lying = valid_row(5.0, 0.5);
  lying.cyl2_error_d = 0.6;  // beyond the 0.25 tolerance
  lying.geom_valid = true;   // upstream claim, must be ignored

  const CriticVerdict verdict =
      wake::critic_step(state, cfg, windows, {lying});
  ASSERT_EQ(verdict.invalid_spacings.size(), 1u);
  EXPECT_DOUBLE_EQ(verdict.invalid_spacings[0], 5.0);
  EXPECT_EQ(verdict.status, CriticStatus::needs_refinement);
  EXPECT_TRUE(has_message(state, "critic", "validity_mismatch"));
}

TEST(Critic, SolvedOnceEveryWindowIsCoveredOrExhausted) {
  TempDir dir;
  CampaignConfig cfg = scripted_config(dir.str());
  cfg.spacing_min = 3.5;
  cfg.spacing_max = 5.5;  // two windows
  const auto windows =
      wake::partition_windows(cfg.spacing_min, cfg.spacing_max,
                              cfg.window_width);
  CampaignState state;
  state.iteration = 1;

  std::vector<ResultRow> rows = {valid_row(4.0, 0.5)};
  CriticVerdict verdict = wake::critic_step(state, cfg, windows, rows);
  EXPECT_EQ(verdict.status, CriticStatus::needs_refinement);
  ASSERT_EQ(verdict.refinements.size(), 1u);
  EXPECT_EQ(verdict.refinements[0], 1);

  rows.push_back(invalid_row(4.7, 0.5, 1));
  rows.push_back(invalid_row(4.8, 0.5, 2));
  verdict = wake::critic_step(state, cfg, windows, rows);
  EXPECT_EQ(verdict.status, CriticStatus::solved);  // covered + exhausted
  EXPECT_TRUE(verdict.refinements.empty());
}

TEST(Critic, IterationBudgetForcesSolved) {
  TempDir dir;
  CampaignConfig cfg = scripted_config(dir.str());
  cfg.max_iterations = 3;
  const auto windows =
      wake::partition_windows(cfg.spacing_min, cfg.spacing_max,
                              cfg.window_width);
  CampaignState state;
  state.iteration = 3;
  const CriticVerdict verdict =
      wake::critic_step(state, cfg, windows, {valid_row(5.0, 0.5)});
  EXPECT_EQ(verdict.status, CriticStatus::solved);
  EXPECT_FALSE(verdict.refinements.empty());
}

TEST(Route, SendsSolvedOrSpentBudgetsToTheWriter) {
  TempDir dir;
  CampaignConfig cfg = scripted_config(dir.str());
  cfg.max_iterations = 5;
  CampaignState state;
  state.iteration = 2;

  CriticVerdict solved;
  solved.status = CriticStatus::solved;
  CriticVerdict refine;
  refine.status = CriticStatus::needs_refinement;

  EXPECT_EQ(wake::route(state, cfg, solved, true), NextNode::writer);
  EXPECT_EQ(wake::route(state, cfg, solved, false), NextNode::planner);
  EXPECT_EQ(wake::route(state, cfg, refine, true), NextNode::planner);
  state.iteration = 5;
  EXPECT_EQ(wake::route(state, cfg, refine, true), NextNode::writer);
  EXPECT_EQ(wake::route(state, cfg, refine, false), NextNode::planner);
}

TEST(CampaignStateJson, RoundTripsThroughDisk) {
  TempDir dir;
  CampaignState state;
  state.iteration = 4;
  state.csv_path = "a/b.csv";
  state.status = CampaignStatus::aborted;
  state.failed_attempts = {{5.5, 2}, {6.25, 3}};
  state.log("planner", "hello");
  state.log("critic", "verdict=solved");

  const std::string path = dir.str() + "/state.json";
  wake::save_state(state, path);
  const CampaignState back = wake::load_state(path);
  EXPECT_EQ(back.iteration, 4);
  EXPECT_EQ(back.csv_path, "a/b.csv");
  EXPECT_EQ(back.status, CampaignStatus::aborted);
  ASSERT_EQ(back.failed_attempts.size(), 2u);
  EXPECT_DOUBLE_EQ(back.failed_attempts[1].spacing, 6.25);
  ASSERT_EQ(back.messages.size(), 2u);
  EXPECT_EQ(back.messages[1].event, "verdict=solved");

  EXPECT_THROW(wake::load_state(dir.str() + "/absent.json"),
               std::runtime_error);
}

TEST(RunCampaign, ScriptedAnalyticCoversEveryWindow) {
  TempDir dir;
  CampaignConfig cfg = scripted_config(dir.str());
  const auto art = wake::run_campaign(cfg);

  EXPECT_EQ(art.state.status, CampaignStatus::solved);
  EXPECT_LE(art.state.iteration, cfg.max_iterations);
  ASSERT_TRUE(art.report.has_value());
  EXPECT_TRUE(std::filesystem::exists(art.report->report_path));
  EXPECT_TRUE(std::filesystem::exists(art.csv_path));
  EXPECT_TRUE(std::filesystem::exists(art.state_path));
  EXPECT_TRUE(std::filesystem::exists(art.log_path));

  const auto rows = wake::read_result_csv(art.csv_path);
  ASSERT_FALSE(rows.empty());
  const auto windows =
      wake::partition_windows(cfg.spacing_min, cfg.spacing_max,
                              cfg.window_width);
  const auto cov = wake::coverage_status(rows, windows, cfg.retry_budget);
  for (const WindowStatus s : cov) EXPECT_EQ(s, WindowStatus::covered);

  // Row counts per spacing follow the station-count formula.
  std::map<double, int> per_spacing;
  for (const ResultRow& r : rows) per_spacing[r.spacing]++;
  EXPECT_GE(per_spacing.size(), 7u);
  for (const auto& [s, n] : per_spacing)
    EXPECT_EQ(n, cfg.sweep.station_count(s)) << "spacing " << s;
}

TEST(RunCampaign, SameSeedGivesByteIdenticalEvidence) {
  TempDir a, b;
  CampaignConfig ca = scripted_config(a.str());
  CampaignConfig cb = scripted_config(b.str());
  const auto ra = wake::run_campaign(ca);
  const auto rb = wake::run_campaign(cb);
  EXPECT_EQ(slurp(ra.csv_path), slurp(rb.csv_path));
  ASSERT_TRUE(ra.report && rb.report);
  EXPECT_EQ(slurp(ra.report->report_path), slurp(rb.report->report_path));

  TempDir c;
  CampaignConfig cc = scripted_config(c.str());
  cc.master_seed = 77;
  const auto rc = wake::run_campaign(cc);
  EXPECT_NE(slurp(ra.csv_path), slurp(rc.csv_path));
}

TEST(RunCampaign, RemoteSurrogateOutageAbortsWithResumableState) {
  TempDir dir;
  CampaignConfig cfg = scripted_config(dir.str());
  cfg.surrogate.backend = wake::SurrogateBackend::remote;
  cfg.surrogate.remote.endpoint = "http://127.0.0.1:9";  // nothing listens
  cfg.surrogate.remote.max_attempts = 1;
  cfg.surrogate.remote.backoff_base_s = 0.0;
  cfg.surrogate.remote.timeout_s = 1.0;

  EXPECT_THROW(wake::run_campaign(cfg), wake::RemoteError);
  const std::string state_path = dir.str() + "/state.json";
  ASSERT_TRUE(std::filesystem::exists(state_path));
  const CampaignState state = wake::load_state(state_path);
  EXPECT_EQ(state.status, CampaignStatus::aborted);
  EXPECT_EQ(state.iteration, 1);
}

LlmOptions stub_options(const std::string& url) {
  LlmOptions opt;
  opt.base_url = url;
  opt.max_attempts = 1;
  opt.backoff_base_s = 0.0;
  opt.timeout_s = 5.0;
  return opt;
}

std::string completion(const std::string& content) {
  nlohmann::json message;
  message["content"] = content;
  nlohmann::json choice;
  choice["message"] = message;
  nlohmann::json j;
  j["choices"] = nlohmann::json::array({choice});
  return j.dump();
}

TEST(RemotePlanner, UsesParsedSuggestionsAndDropsOffWindowOnes) {
  wake_test::StubServer server([](httplib::Server& s) {
    s.Post("/chat/completions",
           [](const httplib::Request&, httplib::Response& res) {
             res.set_content(
                 completion(
                     "{\"suggested_ds\": [3.9, 5.0], \"done\": false}"),
                 "application/json");
           });
  });

  TempDir dir;
  CampaignConfig cfg = scripted_config(dir.str());
  cfg.llm.kind = LlmBackendKind::remote;
  LlmClient client(stub_options(server.url()));

  const auto windows =
      wake::partition_windows(cfg.spacing_min, cfg.spacing_max,
                              cfg.window_width);
  std::vector<WindowStatus> cov(windows.size(), WindowStatus::covered);
  cov[0] = WindowStatus::gap;  // [3.5, 4.5): only 3.9 is admissible
  CampaignState state;
  state.iteration = 1;

  const PlannerOutput out =
      wake::planner_step(state, cfg, windows, cov, {}, &client);
  ASSERT_EQ(out.suggested_ds.size(), 1u);
  EXPECT_DOUBLE_EQ(out.suggested_ds[0], 3.9);
  EXPECT_FALSE(out.done);
  EXPECT_TRUE(has_message(state, "planner", "dropped off-window"));
}

TEST(RemotePlanner, ProseRepliesFallBackToScripted) {
  std::atomic<int> hits{0};
  wake_test::StubServer server([&hits](httplib::Server& s) {
    s.Post("/chat/completions",
           [&hits](const httplib::Request&, httplib::Response& res) {
             ++hits;
             res.set_content(completion("I think 4.2 looks promising."),
                             "application/json");
           });
  });

  TempDir dir;
  CampaignConfig cfg = scripted_config(dir.str());
  cfg.llm.kind = LlmBackendKind::remote;
  LlmClient client(stub_options(server.url()));

  const auto windows =
      wake::partition_windows(cfg.spacing_min, cfg.spacing_max,
                              cfg.window_width);
  std::vector<WindowStatus> cov(windows.size(), WindowStatus::gap);
  CampaignState state;
  state.iteration = 1;

  const PlannerOutput out =
      wake::planner_step(state, cfg, windows, cov, {}, &client);
  EXPECT_EQ(hits.load(), 3);  // initial prompt plus two re-prompts
  EXPECT_EQ(out.suggested_ds.size(), windows.size());
  EXPECT_TRUE(has_message(state, "planner", "llm_fallback"));

  const PlannerOutput scripted =
      wake::scripted_planner(cfg, windows, cov, state.iteration);
  EXPECT_EQ(out.suggested_ds, scripted.suggested_ds);
}

TEST(RemoteCritic, ToolLoopServesCsvThenAcceptsVerdict) {
  std::atomic<int> hits{0};
  std::string second_request_body;
  wake_test::StubServer server([&](httplib::Server& s) {
    s.Post("/chat/completions",
           [&](const httplib::Request& req, httplib::Response& res) {
             const int n = ++hits;
             if (n == 1) {
               res.set_content(
                   completion("{\"tool\": \"read_csv\", \"args\": "
                              "{\"max_rows\": 2}}"),
                   "application/json");
             } else {
               second_request_body = req.body;
               res.set_content(completion("{\"status\": \"solved\"}"),
                               "application/json");
             }
           });
  });

  TempDir dir;
  CampaignConfig cfg = scripted_config(dir.str());
  cfg.spacing_min = 3.5;
  cfg.spacing_max = 4.5;  // single window, covered below
  cfg.llm.kind = LlmBackendKind::remote;
  LlmClient client(stub_options(server.url()));

  const auto windows =
      wake::partition_windows(cfg.spacing_min, cfg.spacing_max,
                              cfg.window_width);
  CampaignState state;
  state.iteration = 1;

  const CriticVerdict verdict = wake::critic_step(
      state, cfg, windows, {valid_row(4.0, 0.5), valid_row(4.0, 0.65)},
      &client);
  EXPECT_EQ(hits.load(), 2);
  EXPECT_EQ(verdict.status, CriticStatus::solved);
  EXPECT_NE(second_request_body.find("TOOL RESULT read_csv"),
            std::string::npos);
  EXPECT_NE(second_request_body.find("delta_star"), std::string::npos);
  EXPECT_TRUE(has_message(state, "critic", "tool read_csv"));
}

TEST(RemoteCritic, UngroundedBestClaimForcesRefinement) {
  wake_test::StubServer server([](httplib::Server& s) {
    s.Post("/chat/completions",
           [](const httplib::Request&, httplib::Response& res) {
             res.set_content(
                 completion("{\"status\": \"solved\", \"best\": "
                            "{\"spacing\": 4.0, \"x_p\": 99.0, "
                            "\"value\": 0.123}}"),
                 "application/json");
           });
  });

  TempDir dir;
  CampaignConfig cfg = scripted_config(dir.str());
  cfg.spacing_min = 3.5;
  cfg.spacing_max = 4.5;
  cfg.llm.kind = LlmBackendKind::remote;
  LlmClient client(stub_options(server.url()));

  const auto windows =
      wake::partition_windows(cfg.spacing_min, cfg.spacing_max,
                              cfg.window_width);
  CampaignState state;
  state.iteration = 1;

  const CriticVerdict verdict = wake::critic_step(
      state, cfg, windows, {valid_row(4.0, 0.5)}, &client);
  EXPECT_EQ(verdict.status, CriticStatus::needs_refinement);
  ASSERT_FALSE(verdict.grounding_violations.empty());
  EXPECT_TRUE(has_message(state, "critic", "grounding_violation"));

  // The same claim with the true numbers is accepted.
  wake_test::StubServer honest([](httplib::Server& s) {
    s.Post("/chat/completions",
           [](const httplib::Request&, httplib::Response& res) {
             res.set_content(
                 completion("{\"status\": \"solved\", \"best\": "
                            "{\"spacing\": 4.0, \"x_p\": 0.5, "
                            "\"value\": 0.4}}"),
                 "application/json");
           });
  });
  LlmClient honest_client(stub_options(honest.url()));
  CampaignState state2;
  state2.iteration = 1;
  const CriticVerdict ok = wake::critic_step(
      state2, cfg, windows, {valid_row(4.0, 0.5)}, &honest_client);
  EXPECT_EQ(ok.status, CriticStatus::solved);
  EXPECT_TRUE(ok.grounding_violations.empty());
}

}  // namespace
