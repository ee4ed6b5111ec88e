#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spkid/audio.hpp"
#include "spkid/config.hpp"
#include "spkid/eval.hpp"
#include "spkid/features.hpp"
#include "spkid/preprocess.hpp"
#include "spkid/synth.hpp"
#include "spkid/vq.hpp"

namespace {

std::string flag_name(const std::string& key) {
  std::string flag = "--" + key;
  for (char& c : flag) {
    if (c == '_') c = '-';
  }
  return flag;
}

const char* key_help(const std::string& key) {
  static const std::map<std::string, const char*> help = {
      {"seed", "global RNG seed; every stage derives its own seed from it"},
      {"wiener_noise_frames", "leading frames used for the noise spectrum estimate"},
      {"wiener_smoothing_alpha", "decision-directed SNR smoothing factor [0,1)"},
      {"wiener_gain_floor", "lower bound on the spectral gain (0,1]"},
      {"endpoint_energy_floor_db", "frame energy (dB) above which a frame always counts as speech"},
      {"endpoint_threshold_offset_db", "speech threshold offset (dB) above the noise floor"},
      {"endpoint_min_speech_frames", "shortest frame run kept as speech"},
      {"endpoint_min_silence_frames", "silence gaps shorter than this many frames are bridged"},
      {"pre_emphasis_alpha", "pre-emphasis coefficient in y[t] = x[t] - a*x[t-1]"},
      {"frame_ms", "frame length in milliseconds [10,30]"},
      {"frame_overlap", "fractional frame overlap [0.25,0.75]"},
      {"feature_method", "lpc|lpcc|rcc|mfcc|dmfcc|ddmfcc"},
      {"mfcc_n_fft", "FFT size (power of two)"},
      {"mfcc_n_filters", "mel filterbank size"},
      {"mfcc_n_ceps", "cepstral coefficients kept"},
      {"mfcc_fmin_hz", "filterbank lower edge (Hz)"},
      {"mfcc_fmax_hz", "filterbank upper edge (Hz); 0 means Nyquist"},
      {"mfcc_include_c0", "keep the 0th cepstral coefficient (true|false)"},
      {"lpc_order", "LPC predictor order"},
      {"lpcc_n_ceps", "LPCC cepstral coefficients"},
      {"rcc_n_ceps", "real-cepstrum coefficients"},
      {"delta_window", "regression half-window for delta features"},
      {"delta_concat", "append deltas to the base MFCCs instead of standalone (true|false)"},
      {"codebook_trainer", "ga|lbg"},
      {"codebook_size", "number of codewords"},
      {"lbg_epsilon", "LBG split perturbation"},
      {"vq_pool_max", "cap on pooled training frames (evenly subsampled)"},
      {"ga_population", "GA population size"},
      {"ga_generations", "GA generations (0 = best of the initial population)"},
      {"ga_crossover_points", "crossover points per mating"},
      {"ga_mutation_prob", "per-gene mutation probability"},
      {"ga_elitism", "chromosomes carried unchanged per generation"},
      {"ga_fitness", "neg_distortion|similarity"},
      {"groups", "utterance groups in the grouping codebook"},
      {"hmm_states", "HMM states per speaker"},
      {"hmm_topology", "left_to_right|ergodic"},
      {"hmm_max_iters", "Baum-Welch iteration cap"},
      {"hmm_tol", "Baum-Welch stop threshold on log-likelihood gain (0 = run all iterations)"},
      {"identify_mode", "grouped|exhaustive"},
      {"eval_methods", "comma-separated feature methods to evaluate"},
      {"eval_exclude_failed", "exclude failed probes from rate denominators (true|false)"},
      {"noise_offset_random", "seeded random noise start offset per probe (true|false)"},
      {"jobs", "worker threads for evaluation cells"},
  };
  const auto it = help.find(key);
  return it == help.end() ? "" : it->second;
}

/// Registers --config plus one flag per config key; flags override the file.
class ConfigFlags {
 public:
  void attach(CLI::App* cmd) {
    cmd_ = cmd;
    cmd->add_option("--config", config_path_,
                    "JSON config file; defaults to $SPKID_CONFIG when set");
    spkid::detail::for_each_config_key(flag_values_, [&](const char* key, auto& field) {
      keys_.emplace_back(key);
      cmd->add_option(flag_name(key), field, key_help(key));
    });
  }

  spkid::Config resolve() const {
    spkid::Config file_cfg;
    std::string path = config_path_;
    if (path.empty()) {
      if (const char* env = std::getenv("SPKID_CONFIG"); env != nullptr && *env != '\0') {
        path = env;
      }
    }
    if (!path.empty()) file_cfg = spkid::load_config(path);
    nlohmann::json merged = spkid::config_to_json(file_cfg);
    const nlohmann::json flags = spkid::config_to_json(flag_values_);
    for (const auto& key : keys_) {
      if (cmd_->count(flag_name(key)) > 0) merged[key] = flags.at(key);
    }
    return spkid::config_from_json(merged);
  }

 private:
  CLI::App* cmd_ = nullptr;
  spkid::Config flag_values_;
  std::string config_path_;
  std::vector<std::string> keys_;
};

std::pair<std::size_t, std::size_t> framing(const spkid::Config& cfg, int sample_rate_hz) {
  const auto frame_len = static_cast<std::size_t>(
      std::llround(cfg.frame_ms * static_cast<double>(sample_rate_hz) / 1000.0));
  const auto hop = static_cast<std::size_t>(
      std::llround(static_cast<double>(frame_len) * (1.0 - cfg.frame_overlap)));
  return {frame_len, hop};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise-robust closed-set speaker identification"};
  app.require_subcommand(1);

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Denoise a wav and trim silence");
  auto pre_flags = std::make_shared<ConfigFlags>();
  auto pre_in = std::make_shared<std::string>();
  auto pre_out = std::make_shared<std::string>();
  pre->add_option("input", *pre_in, "input wav")->required();
  pre->add_option("-o,--output", *pre_out, "output wav")->required();
  pre_flags->attach(pre);
  pre->callback([pre_flags, pre_in, pre_out] {
    const spkid::Config cfg = pre_flags->resolve();
    const spkid::AudioBuffer buf = spkid::read_wav(*pre_in);
    const spkid::AudioBuffer denoised = spkid::wiener_filter(buf, spkid::wiener_config(cfg));
    const auto [frame_len, hop] = framing(cfg, buf.sample_rate_hz);
    const auto segments =
        spkid::detect_endpoints(denoised, frame_len, hop, spkid::endpoint_config(cfg));
    const spkid::AudioBuffer trimmed = spkid::remove_silence(denoised, segments);
    spkid::write_wav(*pre_out, trimmed);
    std::cout << "kept " << trimmed.size() << " of " << buf.size() << " samples across "
              << segments.size() << " speech segment(s)\n";
  });

  // extract
  auto* ext = app.add_subcommand("extract", "Extract features from a wav");
  auto ext_flags = std::make_shared<ConfigFlags>();
  auto ext_in = std::make_shared<std::string>();
  auto ext_out = std::make_shared<std::string>();
  auto ext_method = std::make_shared<std::string>();
  ext->add_option("input", *ext_in, "input wav")->required();
  ext->add_option("-o,--output", *ext_out, "output feature file")->required();
  ext->add_option("--method", *ext_method, "feature method (overrides --feature-method)");
  ext_flags->attach(ext);
  ext->callback([ext_flags, ext_in, ext_out, ext_method] {
    spkid::Config cfg = ext_flags->resolve();
    if (!ext_method->empty()) cfg.feature_method = *ext_method;
    const spkid::FeatureMethod method = spkid::parse_feature_method(cfg.feature_method);
    const spkid::FeatureSequence fs =
        spkid::extract(spkid::read_wav(*ext_in), method, spkid::extract_config(cfg));
    spkid::write_feature_file(*ext_out, fs);
    std::cout << "wrote " << fs.size() << " frames of dim " << fs.dim << " ("
              << spkid::to_string(method) << ")\n";
  });

  // train
  auto* tr = app.add_subcommand("train", "Train codebooks and speaker models");
  auto tr_flags = std::make_shared<ConfigFlags>();
  auto tr_manifest = std::make_shared<std::string>();
  auto tr_out = std::make_shared<std::string>();
  auto tr_codebook = std::make_shared<std::string>();
  auto tr_method = std::make_shared<std::string>();
  tr->add_option("--manifest", *tr_manifest, "corpus manifest JSON")->required();
  tr->add_option("-o,--output", *tr_out, "model directory")->required();
  tr->add_option("--codebook", *tr_codebook, "ga|lbg (overrides --codebook-trainer)");
  tr->add_option("--method", *tr_method, "feature method (overrides --feature-method)");
  tr_flags->attach(tr);
  tr->callback([tr_flags, tr_manifest, tr_out, tr_codebook, tr_method] {
    spkid::Config cfg = tr_flags->resolve();
    if (!tr_codebook->empty()) cfg.codebook_trainer = *tr_codebook;
    if (!tr_method->empty()) cfg.feature_method = *tr_method;
    spkid::validate(cfg);
    const spkid::FeatureMethod method = spkid::parse_feature_method(cfg.feature_method);
    const spkid::CorpusManifest mf = spkid::load_manifest(*tr_manifest);
    const spkid::RecognitionModel rm = spkid::enroll(mf, method, cfg);
    spkid::save_models(*tr_out, rm, method, cfg);
    std::cout << "trained " << rm.quantizer.size() << "-codeword " << cfg.codebook_trainer
              << " codebook, " << rm.grouping.groups.size() << " group(s), " << rm.models.size()
              << " speaker model(s) -> " << *tr_out << "\n";
  });

  // identify
  auto* id = app.add_subcommand("identify", "Identify the speaker of a wav");
  auto id_in = std::make_shared<std::string>();
  auto id_models = std::make_shared<std::string>();
  auto id_mode = std::make_shared<std::string>();
  id->add_option("input", *id_in, "probe wav")->required();
  id->add_option("--models", *id_models, "model directory from 'train'")->required();
  id->add_option("--mode", *id_mode, "grouped|exhaustive (overrides the stored config)");
  id->callback([id_in, id_models, id_mode] {
    const spkid::ModelStore store = spkid::load_models(*id_models);
    spkid::Config cfg = store.config;
    if (!id_mode->empty()) cfg.identify_mode = *id_mode;
    const spkid::IdentifyMode mode = spkid::parse_identify_mode(cfg.identify_mode);
    const spkid::FeatureSequence fs =
        spkid::extract(spkid::read_wav(*id_in), store.method, spkid::extract_config(cfg));
    const spkid::IdentifyResult res = spkid::identify_detailed(fs, store.model, mode);
    std::cout << "speaker " << res.speaker_id << "\n";
    if (mode == spkid::IdentifyMode::Grouped) std::cout << "group " << res.group << "\n";
    for (const auto& [speaker, ll] : res.scores) {
      std::cout << "score " << speaker << " " << spkid::detail::format_double(ll) << "\n";
    }
  });

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Evaluate identification rates over noise x SNR");
  auto ev_flags = std::make_shared<ConfigFlags>();
  auto ev_manifest = std::make_shared<std::string>();
  auto ev_out = std::make_shared<std::string>();
  ev->add_option("--manifest", *ev_manifest, "corpus manifest JSON")->required();
  ev->add_option("-o,--output", *ev_out, "report directory")->required();
  ev_flags->attach(ev);
  ev->callback([ev_flags, ev_manifest, ev_out] {
    const spkid::Config cfg = ev_flags->resolve();
    std::vector<spkid::FeatureMethod> methods;
    for (const auto& m : spkid::split_csv_list(cfg.eval_methods)) {
      methods.push_back(spkid::parse_feature_method(m));
    }
    const spkid::CorpusManifest mf = spkid::load_manifest(*ev_manifest);
    spkid::EvalReport report = spkid::run_evaluation(mf, methods, cfg);
    spkid::render_report(report, *ev_out);
    for (const auto& m : report.methods) {
      std::cout << "average " << m << " " << spkid::detail::format_rate(report.method_avg.at(m))
                << "\n";
    }
    std::cout << "report written to " << *ev_out << "\n";
  });

  // sweep
  auto* sw = app.add_subcommand("sweep", "Sweep a GA parameter and record rates");
  auto sw_flags = std::make_shared<ConfigFlags>();
  auto sw_manifest = std::make_shared<std::string>();
  auto sw_out = std::make_shared<std::string>();
  auto sw_param = std::make_shared<std::string>();
  auto sw_values = std::make_shared<std::vector<std::size_t>>();
  auto sw_method = std::make_shared<std::string>();
  sw->add_option("--manifest", *sw_manifest, "corpus manifest JSON")->required();
  sw->add_option("-o,--output", *sw_out, "output directory")->required();
  sw->add_option("--param", *sw_param, "crossover|generations")->required();
  sw->add_option("--values", *sw_values, "comma-separated parameter values")
      ->required()
      ->delimiter(',');
  sw->add_option("--method", *sw_method, "feature method (overrides --feature-method)");
  sw_flags->attach(sw);
  sw->callback([sw_flags, sw_manifest, sw_out, sw_param, sw_values, sw_method] {
    spkid::Config cfg = sw_flags->resolve();
    if (!sw_method->empty()) cfg.feature_method = *sw_method;
    const spkid::FeatureMethod method = spkid::parse_feature_method(cfg.feature_method);
    const spkid::CorpusManifest mf = spkid::load_manifest(*sw_manifest);
    std::vector<spkid::SweepPoint> curve;
    std::string param_name;
    if (*sw_param == "crossover") {
      curve = spkid::sweep_crossover(mf, method, cfg, *sw_values);
      param_name = "crossover_points";
    } else if (*sw_param == "generations") {
      curve = spkid::sweep_generations(mf, method, cfg, *sw_values);
      param_name = "generations";
    } else {
      spkid::fail("ConfigInvalid", "--param must be crossover or generations");
    }
    std::error_code ec;
    std::filesystem::create_directories(*sw_out, ec);
    spkid::require(!ec, "IoFailure", "cannot create directory '" + *sw_out + "'");
    const std::string csv =
        (std::filesystem::path(*sw_out) / ("sweep_" + *sw_param + ".csv")).string();
    spkid::write_sweep_csv(curve, param_name, csv);
    for (const auto& p : curve) {
      std::cout << "point " << p.value << " " << spkid::detail::format_rate(p.rate) << "\n";
    }
    std::cout << "curve written to " << csv << "\n";
  });

  // synth-corpus
  auto* sc = app.add_subcommand("synth-corpus", "Generate a small synthetic corpus");
  auto sc_cfg = std::make_shared<spkid::SynthConfig>();
  auto sc_out = std::make_shared<std::string>();
  sc->add_option("--speakers", sc_cfg->n_speakers, "number of speakers");
  sc->add_option("--enroll", sc_cfg->enroll_per_speaker, "enrollment utterances per speaker");
  sc->add_option("--test", sc_cfg->test_per_speaker, "test utterances per speaker");
  sc->add_option("--seed", sc_cfg->seed, "corpus RNG seed");
  sc->add_option("--out,-o,--output", *sc_out, "output directory")->required();
  sc->callback([sc_cfg, sc_out] {
    spkid::write_synthetic_corpus(*sc_cfg, *sc_out);
    std::cout << "wrote " << sc_cfg->n_speakers << " speakers ("
              << sc_cfg->enroll_per_speaker << " enroll + " << sc_cfg->test_per_speaker
              << " test each) -> " << *sc_out << "/manifest.json\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const spkid::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
