#include <CLI11.hpp>
#include <json.hpp>

#include "wake/agents.hpp"
#include "wake/latent/edm.hpp"
#include "wake/latent/vae.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

namespace {

std::vector<wake::PointXY> read_xy_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw wake::FormatError("cannot open CSV: " + path);
  std::vector<wake::PointXY> pts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw wake::FormatError(path + ":" + std::to_string(lineno) +
                              ": expected two comma-separated columns");
    const std::string xs = line.substr(0, comma);
    const std::string ys = line.substr(comma + 1);
    try {
      wake::PointXY p;
      p.x = wake::detail::parse_double_field(xs, "x");
      p.y = wake::detail::parse_double_field(ys, "y");
      pts.push_back(p);
    } catch (const wake::FormatError&) {
      if (lineno == 1) continue;  // header line
      throw wake::FormatError(path + ":" + std::to_string(lineno) +
                              ": bad numeric row '" + line + "'");
    }
  }
  if (pts.size() < 2)
    throw wake::FormatError(path + ": need at least two data rows");
  return pts;
}

void emit(const nlohmann::json& j) { std::cout << j.dump(2) << "\n"; }
void emit_record(const nlohmann::json& j) { std::cout << j.dump() << "\n"; }

struct CampaignCliArgs {
  std::string metric = "delta-star";
  std::string surrogate = "analytic";
  std::string llm = "scripted";
  std::uint64_t seed = 2024;
  std::string out = "out";
  int max_iterations = 10;
  std::string config_path;
  std::string replay_path;
  std::string endpoint;
  std::string llm_url;
  bool resume = false;
};

void run_campaign_cmd(const CLI::App& cmd, const CampaignCliArgs& a) {
  wake::CampaignConfig cfg;
  if (!a.config_path.empty()) {
    std::ifstream in(a.config_path);
    if (!in)
      throw wake::FormatError("cannot open config: " + a.config_path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded())
      throw wake::FormatError(a.config_path + " is not valid JSON");
    cfg = wake::campaign_config_from_json(j);
  }
  if (cmd.count("--metric") > 0)
    cfg.mode = wake::metric_mode_from_name(a.metric);
  if (cmd.count("--surrogate") > 0)
    cfg.surrogate.backend = wake::surrogate_backend_from_name(a.surrogate);
  if (cmd.count("--llm") > 0)
    cfg.llm.kind = wake::llm_backend_from_name(a.llm);
  if (cmd.count("--seed") > 0) cfg.master_seed = a.seed;
  if (cmd.count("--out") > 0) cfg.out_dir = a.out;
  if (cmd.count("--max-iterations") > 0)
    cfg.max_iterations = a.max_iterations;
  if (cmd.count("--replay") > 0) cfg.surrogate.replay_path = a.replay_path;
  if (cmd.count("--endpoint") > 0)
    cfg.surrogate.remote.endpoint = a.endpoint;
  if (cmd.count("--llm-url") > 0) cfg.llm.base_url = a.llm_url;

  const wake::CampaignArtifacts art = wake::run_campaign(cfg, a.resume);
  const auto rows = wake::read_result_csv(art.csv_path);
  nlohmann::json j;
  j["status"] = wake::campaign_status_name(art.state.status);
  j["iterations"] = art.state.iteration;
  j["rows"] = rows.size();
  j["csv"] = art.csv_path;
  j["state"] = art.state_path;
  j["log"] = art.log_path;
  if (art.report) {
    j["report"] = art.report->report_path;
    j["fits"] = art.report->fits_path;
    j["figures"] = art.report->figure_paths;
  }
  emit(j);
}

void run_fit_cmd(const std::string& csv, int min_segment) {
  const auto pts = read_xy_csv(csv);
  const wake::LinearFit single = wake::linear_fit(pts);
  nlohmann::json j;
  j["n"] = pts.size();
  try {
    const wake::ModelSelection sel = wake::select_model(pts, min_segment);
    j["choice"] = sel.choice == wake::ModelChoice::single ? "single"
                                                          : "two_segment";
    j["single"] = wake::detail::linear_fit_json(sel.single);
    j["two_segment"] = {
        {"breakpoint", sel.two_segment.breakpoint},
        {"split_index", sel.two_segment.split_index},
        {"total_sse", sel.two_segment.total_sse},
        {"left", wake::detail::linear_fit_json(sel.two_segment.left)},
        {"right", wake::detail::linear_fit_json(sel.two_segment.right)}};
    j["bic_single"] = sel.bic_single;
    j["bic_two"] = sel.bic_two;
  } catch (const std::invalid_argument& e) {
    j["choice"] = "single";
    j["single"] = wake::detail::linear_fit_json(single);
    j["two_segment"] = {{"available", false}, {"reason", e.what()}};
  }
  emit(j);
}

void run_landscape_cmd(const std::string& csv, const std::string& metric,
                       const std::string& out_dir) {
  const wake::MetricMode mode = wake::metric_mode_from_name(metric);
  const auto rows = wake::read_result_csv(csv);
  const auto valid = wake::detail::valid_rows(rows);
  if (valid.empty())
    throw std::invalid_argument("no geometrically valid rows in " + csv);
  const auto grid = wake::landscape_grid(valid, mode);
  std::filesystem::create_directories(out_dir);
  const std::string path =
      (std::filesystem::path(out_dir) / "landscape.svg").string();
  wake::detail::write_text_atomic(
      path, wake::svg::render_heatmap(
                grid, wake::detail::metric_name(mode) + " landscape",
                "x_p / D", "S / D"));
  emit({{"figure", path},
        {"rows", rows.size()},
        {"valid_rows", valid.size()},
        {"spacings", grid.spacings.size()},
        {"stations", grid.stations.size()}});
}

void run_report_cmd(const std::string& csv, const std::string& metric,
                    const std::string& out_dir) {
  const wake::MetricMode mode = wake::metric_mode_from_name(metric);
  const auto rows = wake::read_result_csv(csv);
  const wake::ReportArtifacts art =
      wake::generate_report(rows, mode, out_dir);
  emit({{"report", art.report_path},
        {"fits", art.fits_path},
        {"figures", art.figure_paths},
        {"rows", rows.size()}});
}

// ---------------------------------------------------------------------------
// lab demos

namespace lab {

using wake::latent::GaussianPosterior;
using wake::latent::KlDecomposition;
using wake::latent::Mat;
using wake::latent::Vec;

std::vector<GaussianPosterior> random_batch(int M, std::uint64_t seed) {
  wake::SplitMix64 rng(seed);
  std::vector<GaussianPosterior> batch;
  for (int m = 0; m < M; ++m) {
    GaussianPosterior q;
    q.mu = Vec(2);
    q.sigma = Vec(2);
    for (int j = 0; j < 2; ++j) {
      q.mu[j] = rng.normal();
      q.sigma[j] = std::exp(rng.uniform(-0.7, 0.4));
    }
    batch.push_back(q);
  }
  return batch;
}

/// Mixture whose aggregate has zero mean and covariance [[1, rho], [rho, 1]]:
/// whitened sample means rescaled by the Cholesky factor of (Sigma - s2 I),
/// isotropic component sigma sqrt(s2).
std::vector<GaussianPosterior> correlated_batch(double rho, double s2, int M,
                                                std::uint64_t seed) {
  wake::SplitMix64 rng(seed);
  Mat raw = wake::latent::randn(M, 2, rng);
  Eigen::RowVector2d mean = raw.colwise().mean();
  raw.rowwise() -= mean;
  Eigen::Matrix2d cov = (raw.transpose() * raw) / static_cast<double>(M);
  Eigen::LLT<Eigen::Matrix2d> llt(cov);
  Mat white = llt.matrixL().solve(raw.transpose()).transpose();

  Eigen::Matrix2d target;
  target << 1.0 - s2, rho, rho, 1.0 - s2;
  Eigen::LLT<Eigen::Matrix2d> lltc(target);
  Eigen::Matrix2d lc = lltc.matrixL();
  Mat mu = white * lc.transpose();

  std::vector<GaussianPosterior> batch(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) {
    batch[static_cast<std::size_t>(m)].mu = mu.row(m).transpose();
    batch[static_cast<std::size_t>(m)].sigma = Vec::Constant(2, std::sqrt(s2));
  }
  return batch;
}

void tc_check(std::uint64_t seed, int n_mc) {
  {
    const auto batch = random_batch(64, wake::mix_seed(seed, 1));
    double kl_mean = 0.0;
    for (const auto& q : batch) kl_mean += wake::latent::gaussian_kl_to_prior(q);
    kl_mean /= static_cast<double>(batch.size());
    const KlDecomposition d = wake::latent::kl_decomposition_estimate(
        batch, n_mc, wake::mix_seed(seed, 2));
    const double total =
        d.mutual_information + d.total_correlation + d.dimwise_kl;
    emit_record({{"check", "closed_form"},
                 {"mi", d.mutual_information},
                 {"tc", d.total_correlation},
                 {"dimwise", d.dimwise_kl},
                 {"sum", total},
                 {"closed_form_kl", kl_mean},
                 {"rel_error", std::abs(total - kl_mean) / std::abs(kl_mean)},
                 {"n_mc", n_mc}});
  }
  {
    const double a[4] = {-1.5, -0.5, 0.5, 1.5};
    std::vector<GaussianPosterior> batch;
    for (double x : a)
      for (double y : a) {
        GaussianPosterior q;
        q.mu = Vec(2);
        q.mu << x, y;
        q.sigma = Vec::Constant(2, 0.4);
        batch.push_back(q);
      }
    const KlDecomposition d = wake::latent::kl_decomposition_estimate(
        batch, n_mc, wake::mix_seed(seed, 3));
    emit_record({{"check", "factorized"},
                 {"tc", d.total_correlation},
                 {"tc_se", d.tc_se},
                 {"z_score", d.total_correlation / d.tc_se},
                 {"n_mc", n_mc}});
  }
  {
    const double rho = 0.9;
    const auto batch = correlated_batch(rho, 0.05, 1024, wake::mix_seed(seed, 4));
    const KlDecomposition d = wake::latent::kl_decomposition_estimate(
        batch, n_mc, wake::mix_seed(seed, 5));
    const double tc_true = -0.5 * std::log(1.0 - rho * rho);
    emit_record(
        {{"check", "correlated"},
         {"rho", rho},
         {"tc", d.total_correlation},
         {"tc_analytic", tc_true},
         {"rel_error", std::abs(d.total_correlation - tc_true) / tc_true},
         {"n_mc", n_mc}});
  }
}

double fd_rel_err(double analytic, double fd) {
  return std::abs(analytic - fd) /
         std::max({std::abs(analytic), std::abs(fd), 1e-4});
}

void grad_check(std::uint64_t seed) {
  {
    wake::SplitMix64 rng(wake::mix_seed(seed, 10));
    const Mat X = wake::latent::randn(6, 3, rng);
    wake::latent::VaeParams p =
        wake::latent::VaeParams::init(3, 4, 2, wake::mix_seed(seed, 11));
    const wake::latent::TcWeights w;
    const std::uint64_t mc_seed = wake::mix_seed(seed, 12);
    std::vector<Mat> grads;
    wake::latent::tcvae_loss(X, p, w, mc_seed, &grads);

    const double eps = 1e-5;
    double worst = 0.0;
    int n_params = 0;
    auto tensors = p.params();
    for (std::size_t k = 0; k < tensors.size(); ++k) {
      Mat& t = *tensors[k];
      for (Eigen::Index r = 0; r < t.rows(); ++r)
        for (Eigen::Index c = 0; c < t.cols(); ++c) {
          const double saved = t(r, c);
          t(r, c) = saved + eps;
          const double lp = wake::latent::tcvae_loss(X, p, w, mc_seed).loss;
          t(r, c) = saved - eps;
          const double lm = wake::latent::tcvae_loss(X, p, w, mc_seed).loss;
          t(r, c) = saved;
          worst = std::max(worst, fd_rel_err(grads[k](r, c),
                                             (lp - lm) / (2.0 * eps)));
          ++n_params;
        }
    }
    emit_record({{"check", "tcvae_grad"},
                 {"max_rel_error", worst},
                 {"n_params", n_params},
                 {"threshold", 1e-4}});
  }
  {
    wake::SplitMix64 rng(wake::mix_seed(seed, 20));
    wake::latent::DenoiserParams p =
        wake::latent::DenoiserParams::init(wake::mix_seed(seed, 21));
    const Vec z0 = wake::latent::randn(2, 1, rng).col(0);
    const Vec zp = wake::latent::randn(2, 1, rng).col(0);
    const Vec zp2 = wake::latent::randn(2, 1, rng).col(0);
    const Vec noise = wake::latent::randn(2, 1, rng).col(0);
    const double S = 6.0, sigma = 0.8;
    const wake::latent::EdmConfig cfg;
    const double lam = wake::latent::edm_lambda(sigma, cfg.sigma_data);

    std::vector<Mat> grads;
    wake::latent::edm_loss(p, z0, zp, zp2, S, sigma, noise, lam, cfg, &grads);

    const double eps = 1e-5;
    double worst = 0.0;
    int n_params = 0;
    auto tensors = p.params();
    for (std::size_t k = 0; k < tensors.size(); ++k) {
      Mat& t = *tensors[k];
      for (Eigen::Index r = 0; r < t.rows(); ++r)
        for (Eigen::Index c = 0; c < t.cols(); ++c) {
          const double saved = t(r, c);
          t(r, c) = saved + eps;
          const double lp =
              wake::latent::edm_loss(p, z0, zp, zp2, S, sigma, noise, lam, cfg);
          t(r, c) = saved - eps;
          const double lm =
              wake::latent::edm_loss(p, z0, zp, zp2, S, sigma, noise, lam, cfg);
          t(r, c) = saved;
          worst = std::max(worst, fd_rel_err(grads[k](r, c),
                                             (lp - lm) / (2.0 * eps)));
          ++n_params;
        }
    }
    emit_record({{"check", "edm_grad"},
                 {"max_rel_error", worst},
                 {"n_params", n_params},
                 {"threshold", 1e-4}});
  }
}

void edm_train(std::uint64_t seed, int epochs, int draws) {
  wake::latent::ToyDatasetSpec spec;
  spec.kind = wake::latent::ToyDataset::mixture;
  spec.data_seed = wake::mix_seed(seed, 30);
  wake::latent::TrainConfig tc;
  tc.epochs = epochs;
  const wake::latent::TrainResult res = wake::latent::train_toy(
      spec, wake::latent::DenoiserParams::init(wake::mix_seed(seed, 31)), tc,
      wake::mix_seed(seed, 32));

  wake::latent::EdmConfig cfg;
  cfg.sigma_data = res.sigma_data;
  const Mat z = wake::latent::heun_sample_batch(
      res.params, spec.s, Mat::Zero(draws, wake::latent::kContextDim), cfg,
      wake::mix_seed(seed, 33));
  const Eigen::RowVector2d mean = z.colwise().mean();
  Eigen::RowVector2d var;
  for (int j = 0; j < 2; ++j)
    var[j] = (z.col(j).array() - mean[j]).square().mean();

  const double target_var0 =
      spec.mix_mean * spec.mix_mean + spec.mix_sigma * spec.mix_sigma;
  const double target_var1 = spec.mix_sigma * spec.mix_sigma;
  emit_record({{"check", "edm_train"},
               {"epochs", epochs},
               {"final_loss", res.epoch_losses.back()},
               {"n_draws", draws},
               {"mean", {mean[0], mean[1]}},
               {"cov_diag", {var[0], var[1]}},
               {"target_mean", {0.0, 0.0}},
               {"target_cov_diag", {target_var0, target_var1}}});
}

void rollout_demo(std::uint64_t seed, double S, int T, int epochs) {
  wake::latent::ToyDatasetSpec spec;
  spec.kind = wake::latent::ToyDataset::ar_rotation;
  spec.n = 2048;
  spec.s = S;
  spec.data_seed = wake::mix_seed(seed, 40);
  wake::latent::TrainConfig tc;
  tc.epochs = epochs;
  const wake::latent::TrainResult res = wake::latent::train_toy(
      spec, wake::latent::DenoiserParams::init(wake::mix_seed(seed, 41)), tc,
      wake::mix_seed(seed, 42));

  const wake::latent::ToyData data = wake::latent::make_toy_data(spec);
  const Eigen::Index last = data.traj.rows() - 1;
  std::vector<wake::latent::LatentState> ctx = {
      data.traj.row(last).transpose(), data.traj.row(last - 1).transpose()};

  wake::latent::EdmConfig cfg;
  cfg.sigma_data = res.sigma_data;
  const auto states = wake::latent::rollout(res.params, ctx, S, T, cfg,
                                            wake::mix_seed(seed, 43));

  for (int t = 0; t < T; ++t)
    emit_record({{"step", t},
                 {"z", {states[static_cast<std::size_t>(t)][0],
                        states[static_cast<std::size_t>(t)][1]}},
                 {"radius", states[static_cast<std::size_t>(t)].norm()}});

  // Mean turning angle between consecutive states against the chain's
  // rotation per step.
  double angle_sum = 0.0;
  int n_angles = 0;
  wake::latent::LatentState prev = ctx[0];
  for (const auto& z : states) {
    const double cross = prev[0] * z[1] - prev[1] * z[0];
    const double dot = prev[0] * z[0] + prev[1] * z[1];
    if (prev.norm() > 1e-6 && z.norm() > 1e-6) {
      angle_sum += std::atan2(cross, dot);
      ++n_angles;
    }
    prev = z;
  }
  emit_record(
      {{"check", "rollout"},
       {"steps", T},
       {"mean_turn_angle", n_angles > 0 ? angle_sum / n_angles : 0.0},
       {"chain_angle", 2.0 * std::numbers::pi / S},
       {"chain_decay", spec.ar_decay}});
}

}  // namespace lab

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "wakescout: autonomous exploration of tandem-cylinder wake "
      "surrogates"};
  app.require_subcommand(1);

  // campaign
  CampaignCliArgs ca;
  CLI::App* campaign = app.add_subcommand(
      "campaign", "Run an exploration campaign and write its artifacts");
  campaign->add_option("--metric", ca.metric, "Primary metric")
      ->check(CLI::IsMember({"delta-star", "theta"}));
  campaign->add_option("--surrogate", ca.surrogate, "Flow generator backend")
      ->check(CLI::IsMember({"analytic", "replay", "remote"}));
  campaign->add_option("--llm", ca.llm, "Agent language-model backend")
      ->check(CLI::IsMember({"scripted", "remote"}));
  campaign->add_option("--seed", ca.seed, "Master seed");
  campaign->add_option("--out", ca.out, "Output directory");
  campaign->add_option("--max-iterations", ca.max_iterations,
                       "Iteration budget")
      ->check(CLI::PositiveNumber);
  campaign->add_option("--config", ca.config_path,
                       "JSON config file; flags override its values");
  campaign->add_option("--replay", ca.replay_path,
                       "Snapshot archive for the replay backend");
  campaign->add_option("--endpoint", ca.endpoint,
                       "Remote surrogate endpoint URL");
  campaign->add_option("--llm-url", ca.llm_url,
                       "Chat-completions base URL (else WAKE_AGENT_LLM_URL)");
  campaign->add_flag("--resume", ca.resume,
                     "Continue from an existing state file");
  campaign->callback([&] { run_campaign_cmd(*campaign, ca); });

  // fit
  std::string fit_csv;
  int fit_min_segment = 3;
  CLI::App* fit = app.add_subcommand(
      "fit", "Fit scaling laws to a two-column x,y CSV");
  fit->add_option("--csv", fit_csv, "Input CSV (x,y rows, optional header)")
      ->required();
  fit->add_option("--min-segment", fit_min_segment,
                  "Minimum points per segment")
      ->check(CLI::Range(2, 1000000));
  fit->callback([&] { run_fit_cmd(fit_csv, fit_min_segment); });

  // landscape
  std::string land_csv, land_metric = "delta-star", land_out = ".";
  CLI::App* landscape = app.add_subcommand(
      "landscape", "Render the metric landscape from an evidence CSV");
  landscape->add_option("--csv", land_csv, "Evidence CSV")->required();
  landscape->add_option("--metric", land_metric, "Metric to plot")
      ->check(CLI::IsMember({"delta-star", "theta"}));
  landscape->add_option("--out", land_out, "Output directory");
  landscape->callback(
      [&] { run_landscape_cmd(land_csv, land_metric, land_out); });

  // report
  std::string rep_csv, rep_metric = "delta-star", rep_out;
  CLI::App* report = app.add_subcommand(
      "report", "Regenerate the report artifacts from an evidence CSV");
  report->add_option("--csv", rep_csv, "Evidence CSV")->required();
  report->add_option("--metric", rep_metric, "Primary metric")
      ->check(CLI::IsMember({"delta-star", "theta"}));
  report->add_option("--out", rep_out, "Output directory")->required();
  report->callback([&] { run_report_cmd(rep_csv, rep_metric, rep_out); });

  // lab
  CLI::App* labcmd = app.add_subcommand(
      "lab", "Latent-space demos; line-delimited JSON records on stdout");
  labcmd->require_subcommand(1);
  std::uint64_t lab_seed = 2024;
  int lab_nmc = 100000;
  int lab_epochs = 200;
  int lab_draws = 10000;
  int lab_T = 16;
  double lab_S = 6.0;

  CLI::App* tc = labcmd->add_subcommand(
      "tc-check", "KL decomposition against closed forms");
  tc->add_option("--seed", lab_seed, "Seed");
  tc->add_option("--n-mc", lab_nmc, "Monte-Carlo samples")
      ->check(CLI::PositiveNumber);
  tc->callback([&] { lab::tc_check(lab_seed, lab_nmc); });

  CLI::App* gc = labcmd->add_subcommand(
      "grad-check", "Analytic gradients against central differences");
  gc->add_option("--seed", lab_seed, "Seed");
  gc->callback([&] { lab::grad_check(lab_seed); });

  CLI::App* et = labcmd->add_subcommand(
      "edm-train", "Train the toy denoiser on a Gaussian mixture");
  et->add_option("--seed", lab_seed, "Seed");
  et->add_option("--epochs", lab_epochs, "Training epochs")
      ->check(CLI::PositiveNumber);
  et->add_option("--draws", lab_draws, "Samples drawn after training")
      ->check(CLI::PositiveNumber);
  et->callback([&] { lab::edm_train(lab_seed, lab_epochs, lab_draws); });

  CLI::App* ro = labcmd->add_subcommand(
      "rollout", "Autoregressive rollout of the trained denoiser");
  ro->add_option("--seed", lab_seed, "Seed");
  ro->add_option("--spacing", lab_S, "Conditioning spacing S")
      ->check(CLI::PositiveNumber);
  ro->add_option("--steps", lab_T, "Rollout length")
      ->check(CLI::PositiveNumber);
  ro->add_option("--epochs", lab_epochs, "Training epochs")
      ->check(CLI::PositiveNumber);
  ro->callback([&] { lab::rollout_demo(lab_seed, lab_S, lab_T, lab_epochs); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n\n";
    std::cerr << app.help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
