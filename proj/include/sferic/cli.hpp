#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sferic/config.hpp"
#include "sferic/detector.hpp"
#include "sferic/io.hpp"
#include "sferic/nnet/checkpoint.hpp"
#include "sferic/process.hpp"
#include "sferic/sampling.hpp"
#include "sferic/scenario.hpp"
#include "sferic/svg.hpp"
#include "sferic/trainer.hpp"

namespace sferic::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kConfig = 2, kData = 3, kConvergence = 4 };

inline fs::path catalog_path_for(const fs::path& series) {
  auto p = series;
  return p.replace_extension(".cat");
}

inline std::string station_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "station%03zu", k);
  return buf;
}

/// Writes one series + catalog per station and a list of the series paths.
inline int cmd_synth(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const auto sc = scenario_from(cfg);
  std::string list;
  for (std::size_t k = 0; k < sc.stations; ++k) {
    auto r = synthesize_station(sc, cfg.seed(), k);
    r.catalog.series_id = station_name(k);
    const auto path = out / (station_name(k) + ".sfamt");
    write_series(r.series, path);
    write_catalog(r.catalog, catalog_path_for(path));
    list += path.filename().string() + "\n";
    log << path.string() << ": " << r.series.length() << " samples, " << r.catalog.centers.size() << " sferics\n";
  }
  io::write_file_atomic(out / "stations.txt", list);
  return kOk;
}

/// Labeled series for training: files from trainer.series, else the
/// synthetic scenario generated in memory.
inline std::vector<LabeledSeries> training_series(const RunConfig& cfg) {
  std::vector<LabeledSeries> data;
  const auto r = cfg.count("sampling.r");
  const auto files = cfg.list("trainer.series");
  if (!files.empty()) {
    for (const auto& f : files) {
      auto s = read_series(f);
      auto c = read_catalog(catalog_path_for(f));
      data.push_back(make_labeled(f, std::move(s), std::move(c), r));
    }
    return data;
  }
  const auto sc = scenario_from(cfg);
  for (std::size_t k = 0; k < sc.stations; ++k) {
    auto res = synthesize_station(sc, cfg.seed(), k);
    data.push_back(make_labeled("synthetic:" + station_name(k), std::move(res.series), std::move(res.catalog), r));
  }
  return data;
}

/// Series by manifest path; "synthetic:stationK" regenerates station K of
/// the configured scenario.
inline MultiChannelSeries load_manifest_series(const RunConfig& cfg, const std::string& path) {
  constexpr std::string_view prefix = "synthetic:station";
  if (path.starts_with(prefix)) {
    std::size_t k = 0;
    const auto tail = std::string_view(path).substr(prefix.size());
    const auto [p, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), k);
    if (ec != std::errc{} || p != tail.data() + tail.size()) throw DataError("bad synthetic series name: " + path);
    return synthesize_station(scenario_from(cfg), cfg.seed(), k).series;
  }
  return read_series(path);
}

/// Samples named by a manifest, re-cut from their series files.
class ManifestSource {
 public:
  using Loader = std::function<MultiChannelSeries(const std::string&)>;

  ManifestSource(const fs::path& manifest, const SamplingConfig& cfg, bool augment, std::uint64_t seed,
                 const Loader& load)
      : cfg_(cfg), augment_(augment), seed_(seed) {
    entries_ = decode_manifest(io::read_file(manifest));
    if (entries_.empty()) throw DataError(manifest.string() + ": manifest has no samples");
    for (const auto& e : entries_)
      if (!series_.count(e.series_path)) series_.emplace(e.series_path, load(e.series_path));
  }

  double beta() const {
    std::size_t neg = 0;
    for (const auto& e : entries_) neg += e.label == 0;
    return static_cast<double>(neg) / static_cast<double>(entries_.size());
  }

  std::vector<LabeledSample> draw(std::size_t epoch, std::size_t total) const {
    Rng rng(derive_seed(seed_, epoch, 0x6d616e69ULL));
    std::vector<LabeledSample> out;
    for (std::size_t i = 0; i < total; ++i) {
      const auto& e = entries_[uniform_index(rng, entries_.size())];
      auto s = cut_window(series_.at(e.series_path), cfg_.channels, e.start, cfg_.n, e.label);
      if (augment_) add_relative_noise(s, 1.0 - uniform(rng, cfg_.snr_low, cfg_.snr_high), rng);
      normalize_inplace(s);
      out.push_back(std::move(s));
    }
    return out;
  }

 private:
  SamplingConfig cfg_;
  bool augment_;
  std::uint64_t seed_;
  std::vector<ManifestEntry> entries_;
  std::map<std::string, MultiChannelSeries> series_;
};

/// Trains the classifier; writes model.ckpt (best validation accuracy),
/// history.csv and, for generated pools, the epoch-1 manifests and the split.
inline int cmd_train(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const auto scfg = sampling_from(cfg);
  const auto fcfg = fit_from(cfg);
  const auto seed = cfg.seed();
  std::optional<nn::Checkpoint> resume;
  if (!cfg.str("trainer.resume").empty()) resume = nn::load_checkpoint(cfg.str("trainer.resume"));
  auto model = resume ? nn::Classifier<float>{resume->config, nn::build_vgg1d<float>(resume->config, 0)}
                      : nn::Classifier<float>::create(network_from(cfg), derive_seed(seed, 0x6e6574ULL));
  if (model.config.input_channels != scfg.channels.size() || model.config.input_length != scfg.n)
    throw ConfigError("network input does not match sampling.channels / sampling.n");

  EpochSource train, val;
  double beta = 0.0;
  std::vector<LabeledSeries> data;
  std::optional<ManifestSource> mtrain, mval;
  std::optional<PoolSource> ptrain, pval;
  if (!cfg.str("trainer.train_manifest").empty()) {
    if (cfg.str("trainer.val_manifest").empty()) throw ConfigError("trainer.val_manifest is required with trainer.train_manifest");
    auto load = [&](const std::string& p) { return load_manifest_series(cfg, p); };
    mtrain.emplace(cfg.str("trainer.train_manifest"), scfg, true, derive_seed(seed, 0x747261ULL), load);
    mval.emplace(cfg.str("trainer.val_manifest"), scfg, false, derive_seed(seed, 0x76616cULL), load);
    beta = mtrain->beta();
    if (!(beta > 0.0 && beta < 1.0)) throw DataError("training manifest must contain both classes");
    train = [&](std::size_t e) { return mtrain->draw(e, fcfg.train_per_epoch); };
    val = [&](std::size_t e) { return mval->draw(e, fcfg.val_per_epoch); };
  } else {
    data = training_series(cfg);
    const auto ratios = cfg.reals("sampling.split");
    if (ratios.size() != 3) throw ConfigError("sampling.split needs three ratios (train, val, test)");
    const auto split = split_series(data.size(), ratios[0], ratios[1], ratios[2], seed);
    if (split.val.empty()) throw ConfigError("sampling.split leaves no validation series");
    std::vector<const LabeledSeries*> tr, va;
    for (auto i : split.train) tr.push_back(&data[i]);
    for (auto i : split.val) va.push_back(&data[i]);
    const double ratio = cfg.real("sampling.negative_ratio");
    ptrain.emplace(tr, scfg, ratio, true, derive_seed(seed, 0x747261ULL));
    pval.emplace(va, scfg, ratio, false, derive_seed(seed, 0x76616cULL));
    beta = ptrain->beta(fcfg.train_per_epoch);
    train = [&](std::size_t e) { return ptrain->draw(e, fcfg.train_per_epoch); };
    val = [&](std::size_t e) { return pval->draw(e, fcfg.val_per_epoch); };

    std::string split_text;
    auto names = [&](const char* label, const std::vector<std::size_t>& ids) {
      split_text += label;
      for (auto i : ids) split_text += " " + data[i].path;
      split_text += "\n";
    };
    names("train", split.train);
    names("val", split.val);
    names("test", split.test);
    io::write_file_atomic(out / "split.txt", split_text);
    io::write_file_atomic(out / "manifest_train.txt", encode_manifest(ptrain->manifest(ptrain->draw(1, fcfg.train_per_epoch))));
    io::write_file_atomic(out / "manifest_val.txt", encode_manifest(pval->manifest(pval->draw(1, fcfg.val_per_epoch))));
    log << "positive windows available for training: " << ptrain->positives_available() << "\n";
  }
  if (resume) beta = resume->beta;
  log << "beta = " << detail::format_double(beta) << ", parameters = " << model.net.parameter_count() << "\n";

  ResumeState rs;
  if (resume) rs.checkpoint = &*resume;
  auto result = fit(model, train, val, beta, fcfg, seed, rs, [&](const EpochRecord& r) {
    log << "epoch " << r.epoch << " lr " << detail::format_double(r.lr) << " train_loss " << svg::num(r.train_loss, 4)
        << " val_loss " << svg::num(r.val_loss, 4) << " train_acc " << svg::num(r.train_acc, 3) << " val_acc "
        << svg::num(r.val_acc, 3) << "\n";
  });
  nn::save_checkpoint(result.best, out / "model.ckpt");
  io::write_file_atomic(out / "history.csv", history_csv(result.history));
  log << result.stop_reason << "; best epoch " << result.best_epoch << " val_acc "
      << detail::format_double(result.best.val_accuracy) << "\n";
  return result.diverged ? kConvergence : kOk;
}

inline std::string metrics_lines(const std::string& prefix, const ConfusionCounts& c, bool with_accuracy) {
  const auto m = metrics(c);
  auto opt = [](const std::optional<double>& v) { return v ? detail::format_double(*v) : std::string("undefined"); };
  std::string out = prefix + ".tp = " + std::to_string(c.tp) + "\n" + prefix + ".fp = " + std::to_string(c.fp) + "\n";
  if (with_accuracy) out += prefix + ".tn = " + std::to_string(c.tn) + "\n";
  out += prefix + ".fn = " + std::to_string(c.fn) + "\n";
  if (with_accuracy) out += prefix + ".accuracy = " + opt(m.accuracy) + "\n";
  out += prefix + ".precision = " + opt(m.precision) + "\n" + prefix + ".recall = " + opt(m.recall) + "\n" + prefix +
         ".f1 = " + opt(m.f1) + "\n";
  return out;
}

inline SfericCatalog catalog_from_peaks(std::vector<std::size_t> peaks, std::string id) {
  std::sort(peaks.begin(), peaks.end());
  peaks.erase(std::unique(peaks.begin(), peaks.end()), peaks.end());
  return {std::move(id), std::move(peaks)};
}

/// Scans a series; writes <stem>.detected.cat and segments.csv, plus
/// report.txt (and sweep.csv) when a truth catalog is given.
inline int cmd_detect(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  if (cfg.str("input.series").empty()) throw ConfigError("input.series is required for detect");
  if (cfg.str("input.checkpoint").empty()) throw ConfigError("input.checkpoint is required for detect");
  const fs::path series_path = cfg.str("input.series");
  const auto series = read_series(series_path);
  auto model = nn::restore_classifier<float>(nn::load_checkpoint(cfg.str("input.checkpoint")));
  auto dcfg = detector_from(cfg);
  if (model.config.input_length != dcfg.n || model.config.input_channels != dcfg.channels.size())
    throw ConfigError("checkpoint input shape does not match sampling.n / sampling.channels");
  const auto run = scan(series, model_scorer(model), dcfg);
  const auto stem = series_path.stem().string();
  write_catalog(catalog_from_peaks(run.peaks(), stem), out / (stem + ".detected.cat"));
  io::write_file_atomic(out / "segments.csv", segments_csv(run));
  log << run.segments.size() << " sferic segments in " << run.starts.size() << " windows\n";
  if (!cfg.str("input.catalog").empty()) {
    const auto truth = read_catalog(cfg.str("input.catalog"));
    truth.validate(series.length());
    const auto r = cfg.count("sampling.r");
    const auto seg = match_detections(run.peaks(), truth.centers, r).counts;
    const auto win = window_confusion(run, truth, series.length(), r, dcfg.threshold);
    std::string report = "threshold = " + detail::format_double(dcfg.threshold) + "\n";
    report += metrics_lines("segment", seg, false) + metrics_lines("window", win, true);
    io::write_file_atomic(out / "report.txt", report);
    log << report;
    if (cfg.flag("detector.sweep")) {
      std::string csv = "threshold,tp,fp,fn,precision,recall,f1\n";
      auto opt = [](const std::optional<double>& v) { return v ? detail::format_double(*v) : std::string(); };
      for (const auto& row : threshold_sweep(series, run, dcfg, truth, r))
        csv += svg::num(row.threshold, 1) + "," + std::to_string(row.segments.tp) + "," +
               std::to_string(row.segments.fp) + "," + std::to_string(row.segments.fn) + "," +
               opt(row.metrics.precision) + "," + opt(row.metrics.recall) + "," + opt(row.metrics.f1) + "\n";
      io::write_file_atomic(out / "sweep.csv", csv);
    }
  }
  return kOk;
}

inline std::string impedance_csv(const std::vector<std::vector<FrequencyEstimate>>& modes,
                                 const std::optional<EarthModel1D>& earth) {
  using detail::format_double;
  std::string out =
      "mode,frequency_hz,segments,rows,converged,zxx_re,zxx_im,zxy_re,zxy_im,zyx_re,zyx_im,zyy_re,zyy_im,"
      "rho_xy,rho_yx,phi_xy,phi_yx,pt_phi_max,pt_phi_min,pt_alpha,pt_beta";
  if (earth) out += ",rho_model,phi_model";
  out += ",error\n";
  for (const auto& mode : modes)
    for (const auto& fe : mode) {
      out += std::string(to_string(fe.mode)) + "," + format_double(fe.frequency_hz) + "," + std::to_string(fe.segments) +
             "," + std::to_string(fe.rows) + "," + (fe.converged() ? "1" : "0");
      if (fe.z) {
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j)
            out += "," + format_double(fe.z->z(i, j).real()) + "," + format_double(fe.z->z(i, j).imag());
        out += "," + format_double(fe.rp.rho_xy) + "," + format_double(fe.rp.rho_yx) + "," +
               format_double(fe.rp.phi_xy) + "," + format_double(fe.rp.phi_yx);
      } else {
        out += std::string(12, ',');
      }
      if (fe.pt)
        out += "," + format_double(fe.pt->phi_max) + "," + format_double(fe.pt->phi_min) + "," +
               format_double(fe.pt->alpha) + "," + format_double(fe.pt->beta_skew);
      else
        out += ",,,,";
      if (earth) {
        const auto z = surface_impedance(*earth, fe.frequency_hz);
        out += "," + format_double(0.2 * std::norm(z) / fe.frequency_hz) + "," +
               format_double(std::arg(z) * 180.0 / std::numbers::pi);
      }
      std::string err = fe.error;
      std::replace(err.begin(), err.end(), ',', ';');
      out += "," + err + "\n";
    }
  return out;
}

/// Impedance in even and/or sferic mode; writes impedance.csv,
/// rho_phase.svg, phase_tensor.svg and (sferic mode) ensemble.csv.
/// Sferic centers come from the classifier when input.checkpoint is set,
/// else from input.catalog.
inline int cmd_process(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  if (cfg.str("input.series").empty()) throw ConfigError("input.series is required for process");
  const auto series = read_series(cfg.str("input.series"));
  series.require_full();
  const auto pcfg = process_from(cfg);
  const auto& mode = cfg.str("process.mode");
  if (mode != "even" && mode != "sferic" && mode != "both") throw ConfigError("process.mode must be even, sferic or both");
  TaperCache cache;
  std::vector<std::vector<FrequencyEstimate>> results;
  if (mode != "sferic") results.push_back(estimate_impedance(series, SpectralMode::even, {}, pcfg, cache));
  if (mode != "even") {
    std::vector<std::size_t> peaks;
    if (!cfg.str("input.checkpoint").empty()) {
      auto model = nn::restore_classifier<float>(nn::load_checkpoint(cfg.str("input.checkpoint")));
      peaks = scan(series, model_scorer(model), detector_from(cfg)).peaks();
    } else if (!cfg.str("input.catalog").empty()) {
      const auto cat = read_catalog(cfg.str("input.catalog"));
      cat.validate(series.length());
      peaks = cat.centers;
    } else {
      throw ConfigError("sferic mode needs input.checkpoint or input.catalog");
    }
    const auto ens = sferic_ensemble(series, peaks, pcfg);
    std::string csv = "peak,lag,center,correlation\n";
    for (const auto& m : ens.members)
      csv += std::to_string(m.peak) + "," + std::to_string(m.lag) + "," + std::to_string(m.center()) + "," +
             detail::format_double(m.correlation) + "\n";
    io::write_file_atomic(out / "ensemble.csv", csv);
    log << peaks.size() << " candidate sferics, " << ens.members.size() << " retained after alignment and filtering\n";
    results.push_back(estimate_impedance(series, SpectralMode::sferic, ens.centers(), pcfg, cache));
  }
  std::optional<EarthModel1D> earth;
  if (cfg.flag("process.compare_earth")) earth = scenario_from(cfg).earth;
  io::write_file_atomic(out / "impedance.csv", impedance_csv(results, earth));
  const auto title = fs::path(cfg.str("input.series")).filename().string();
  io::write_file_atomic(out / "rho_phase.svg", svg::rho_phase(results, title));
  io::write_file_atomic(out / "phase_tensor.svg", svg::phase_tensor_ellipses(results, title));

  bool any = false, failed = false;
  for (const auto& m : results)
    for (const auto& fe : m) {
      any = any || fe.z.has_value();
      if (fe.z && !(fe.z->diagnostics[0].huber_converged && fe.z->diagnostics[1].huber_converged)) failed = true;
      if (!fe.z && fe.error.find("not finite") != std::string::npos) failed = true;
      if (!fe.z) log << to_string(fe.mode) << " " << svg::num(fe.frequency_hz, 1) << " Hz: " << fe.error << "\n";
    }
  if (!any) throw DataError("no frequency produced an impedance estimate");
  if (failed) {
    log << "robust estimation did not converge at one or more frequencies\n";
    return kConvergence;
  }
  return kOk;
}

}  // namespace sferic::cli
