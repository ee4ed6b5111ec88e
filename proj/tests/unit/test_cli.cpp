#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <string>

#include "../common/test_util.hpp"
#include "spkid/config.hpp"
#include "spkid/features.hpp"

using testutil::run_cli;
using testutil::slurp;
using testutil::TempDir;

namespace {

const std::string kCheap =
    " --codebook-size 8 --ga-population 10 --ga-generations 2 --hmm-states 3"
    " --hmm-max-iters 3 --vq-pool-max 800 --seed 3";

/// One shared corpus for the whole binary test run.
const TempDir& corpus() {
  static TempDir tmp("cli_corpus");
  static bool built = [&] {
    std::string out;
    const int rc =
        run_cli("synth-corpus --speakers 2 --enroll 2 --test 1 --seed 7 -o " + tmp.str(), &out);
    if (rc != 0) throw std::runtime_error("corpus generation failed: " + out);
    return true;
  }();
  (void)built;
  return tmp;
}

}  // namespace

TEST_CASE("usage errors exit with status two") {
  std::string out;
  CHECK(run_cli("", &out) == 2);
  CHECK(run_cli("frobnicate", &out) == 2);
  CHECK(run_cli("train", &out) == 2);  // --manifest and -o are required
  CHECK(run_cli("extract in.wav -o out.feat --lpc-order notanumber", &out) == 2);
  CHECK(run_cli("synth-corpus", &out) == 2);
}

TEST_CASE("help succeeds and lists every configuration flag") {
  std::string out;
  REQUIRE(run_cli("--help", &out) == 0);
  CHECK(out.find("preprocess") != std::string::npos);
  CHECK(out.find("evaluate") != std::string::npos);

  REQUIRE(run_cli("train --help", &out) == 0);
  spkid::Config cfg;
  spkid::detail::for_each_config_key(cfg, [&](const char* key, auto&) {
    std::string flag = "--";
    for (const char* p = key; *p; ++p) flag += (*p == '_') ? '-' : *p;
    INFO("missing flag " << flag);
    CHECK(out.find(flag) != std::string::npos);
  });
}

TEST_CASE("corpus generation is deterministic") {
  const TempDir& first = corpus();
  REQUIRE(std::filesystem::exists(first.str("manifest.json")));
  REQUIRE(std::filesystem::exists(first.str("sp1_e1.wav")));
  REQUIRE(std::filesystem::exists(first.str("noise_white.wav")));

  TempDir second("cli_corpus_again");
  std::string out;
  REQUIRE(run_cli("synth-corpus --speakers 2 --enroll 2 --test 1 --seed 7 -o " + second.str(),
                  &out) == 0);
  CHECK(slurp(first.str("sp1_e1.wav")) == slurp(second.str("sp1_e1.wav")));
  CHECK(slurp(first.str("manifest.json")) == slurp(second.str("manifest.json")));

  TempDir other_seed("cli_corpus_seed");
  REQUIRE(run_cli("synth-corpus --speakers 2 --enroll 2 --test 1 --seed 8 -o " + other_seed.str(),
                  &out) == 0);
  CHECK(slurp(first.str("sp1_e1.wav")) != slurp(other_seed.str("sp1_e1.wav")));
}

TEST_CASE("preprocess trims silence from a wav") {
  TempDir tmp("cli_pre");
  std::string out;
  REQUIRE(run_cli("preprocess " + corpus().str("sp1_e1.wav") + " -o " + tmp.str("trimmed.wav"),
                  &out) == 0);
  CHECK(out.find("kept") != std::string::npos);
  const spkid::AudioBuffer in = spkid::read_wav(corpus().str("sp1_e1.wav"));
  const spkid::AudioBuffer trimmed = spkid::read_wav(tmp.str("trimmed.wav"));
  CHECK(trimmed.size() > 0);
  CHECK(trimmed.size() < in.size());  // the silence pads are gone
}

TEST_CASE("extract writes a readable feature file") {
  TempDir tmp("cli_extract");
  std::string out;
  REQUIRE(run_cli("extract " + corpus().str("sp1_e1.wav") + " --method lpcc -o " +
                      tmp.str("utt.feat"),
                  &out) == 0);
  CHECK(out.find("lpcc") != std::string::npos);
  const spkid::FeatureSequence fs = spkid::read_feature_file(tmp.str("utt.feat"));
  CHECK(fs.method == spkid::FeatureMethod::Lpcc);
  CHECK(fs.dim == 12);
  CHECK(fs.size() > 10);
}

TEST_CASE("pipeline failures exit with status one and a named error") {
  std::string out;
  CHECK(run_cli("extract /no/such/file.wav -o /tmp/x.feat", &out) == 1);
  CHECK(out.find("error: MissingFile") != std::string::npos);

  CHECK(run_cli("identify " + corpus().str("sp1_t1.wav") + " --models /no/such/dir", &out) == 1);
  CHECK(out.find("error: MissingFile") != std::string::npos);

  // Invalid configuration values are caught before any work happens.
  CHECK(run_cli("evaluate --manifest " + corpus().str("manifest.json") +
                    " -o /tmp/unused --groups 0",
                &out) == 1);
  CHECK(out.find("error: ConfigInvalid") != std::string::npos);
}

TEST_CASE("train then identify round-trips through the model store") {
  TempDir tmp("cli_train");
  std::string out;
  REQUIRE(run_cli("train --manifest " + corpus().str("manifest.json") + " -o " +
                      tmp.str("models") + " --method mfcc" + kCheap,
                  &out) == 0);
  CHECK(out.find("trained") != std::string::npos);
  REQUIRE(std::filesystem::exists(tmp.str("models/models.json")));

  REQUIRE(run_cli("identify " + corpus().str("sp1_t1.wav") + " --models " + tmp.str("models"),
                  &out) == 0);
  CHECK(out.find("speaker sp") != std::string::npos);
  CHECK(out.find("group ") != std::string::npos);
  CHECK(out.find("score ") != std::string::npos);

  REQUIRE(run_cli("identify " + corpus().str("sp1_t1.wav") + " --models " + tmp.str("models") +
                      " --mode exhaustive",
                  &out) == 0);
  CHECK(out.find("speaker sp") != std::string::npos);
  // Exhaustive mode scores both enrolled speakers.
  CHECK(out.find("score sp1 ") != std::string::npos);
  CHECK(out.find("score sp2 ") != std::string::npos);
}

TEST_CASE("config file, flag overrides and the environment fallback") {
  TempDir tmp("cli_config");
  testutil::spit(tmp.str("cfg.json"), R"({"codebook_size": 8, "ga_generations": 2,
      "ga_population": 10, "hmm_states": 3, "hmm_max_iters": 3, "vq_pool_max": 800, "seed": 3})");

  std::string out;
  REQUIRE(run_cli("train --manifest " + corpus().str("manifest.json") + " -o " +
                      tmp.str("m_file") + " --config " + tmp.str("cfg.json"),
                  &out) == 0);
  CHECK(out.find("trained 8-codeword") != std::string::npos);

  // An explicit flag beats the file value.
  REQUIRE(run_cli("train --manifest " + corpus().str("manifest.json") + " -o " +
                      tmp.str("m_flag") + " --config " + tmp.str("cfg.json") +
                      " --codebook-size 16",
                  &out) == 0);
  CHECK(out.find("trained 16-codeword") != std::string::npos);

  // Without --config the environment variable supplies the file.
  REQUIRE(run_cli("train --manifest " + corpus().str("manifest.json") + " -o " + tmp.str("m_env"),
                  &out, "SPKID_CONFIG=" + tmp.str("cfg.json") + " ") == 0);
  CHECK(out.find("trained 8-codeword") != std::string::npos);

  // Unknown keys in a config file are rejected, not ignored.
  testutil::spit(tmp.str("typo.json"), R"({"codebok_size": 8})");
  CHECK(run_cli("train --manifest " + corpus().str("manifest.json") + " -o " + tmp.str("m_typo") +
                    " --config " + tmp.str("typo.json"),
                &out) == 1);
  CHECK(out.find("error: ConfigInvalid") != std::string::npos);
}

TEST_CASE("training the quantizer with the splitting trainer also works") {
  TempDir tmp("cli_lbg");
  std::string out;
  REQUIRE(run_cli("train --manifest " + corpus().str("manifest.json") + " -o " +
                      tmp.str("models") + " --codebook lbg" + kCheap,
                  &out) == 0);
  CHECK(out.find("lbg codebook") != std::string::npos);
}

TEST_CASE("evaluate renders reports and repeats byte-identically") {
  TempDir tmp("cli_eval");
  std::string out;
  const std::string common = "evaluate --manifest " + corpus().str("manifest.json") + kCheap;
  REQUIRE(run_cli(common + " -o " + tmp.str("r1"), &out) == 0);
  CHECK(out.find("average mfcc") != std::string::npos);
  REQUIRE(std::filesystem::exists(tmp.str("r1/report.csv")));
  REQUIRE(std::filesystem::exists(tmp.str("r1/report.md")));
  REQUIRE(std::filesystem::exists(tmp.str("r1/run_meta.json")));

  REQUIRE(run_cli(common + " -o " + tmp.str("r2"), &out) == 0);
  CHECK(slurp(tmp.str("r1/report.csv")) == slurp(tmp.str("r2/report.csv")));
  CHECK(slurp(tmp.str("r1/report.md")) == slurp(tmp.str("r2/report.md")));
}

TEST_CASE("sweep writes one curve point per requested value") {
  TempDir tmp("cli_sweep");
  std::string out;
  const std::string common = "sweep --manifest " + corpus().str("manifest.json") +
                             " --param generations --values 0,2 --method mfcc" + kCheap;
  REQUIRE(run_cli(common + " -o " + tmp.str("s1"), &out) == 0);
  CHECK(out.find("point 0 ") != std::string::npos);
  CHECK(out.find("point 2 ") != std::string::npos);

  const std::string csv = slurp(tmp.str("s1/sweep_generations.csv"));
  CHECK(csv.rfind("generations,rate\n0,", 0) == 0);

  REQUIRE(run_cli(common + " -o " + tmp.str("s2"), &out) == 0);
  CHECK(csv == slurp(tmp.str("s2/sweep_generations.csv")));

  CHECK(run_cli("sweep --manifest " + corpus().str("manifest.json") +
                    " --param warp --values 1 -o " + tmp.str("s3"),
                &out) == 1);
  CHECK(out.find("error: ConfigInvalid") != std::string::npos);
}

TEST_CASE("configuration JSON round-trips and rejects bad values") {
  spkid::Config cfg;
  cfg.codebook_size = 24;
  cfg.eval_methods = "mfcc, lpcc";
  cfg.hmm_topology = "ergodic";
  const spkid::Config back = spkid::config_from_json(spkid::config_to_json(cfg));
  CHECK(back.codebook_size == 24);
  CHECK(back.eval_methods == "mfcc, lpcc");
  CHECK(back.hmm_topology == "ergodic");

  CHECK(spkid::split_csv_list(" mfcc, lpcc ,rcc") ==
        std::vector<std::string>{"mfcc", "lpcc", "rcc"});

  const auto reject = [](auto&& mutate) {
    spkid::Config c;
    mutate(c);
    return testutil::error_name([&] { spkid::validate(c); });
  };
  CHECK(reject([](spkid::Config& c) { c.frame_ms = 50.0; }) == "ConfigInvalid");
  CHECK(reject([](spkid::Config& c) { c.mfcc_n_fft = 500; }) == "ConfigInvalid");
  CHECK(reject([](spkid::Config& c) { c.codebook_trainer = "kmeans"; }) == "ConfigInvalid");
  CHECK(reject([](spkid::Config& c) { c.eval_methods = ""; }) == "ConfigInvalid");
  CHECK(reject([](spkid::Config& c) { c.vq_pool_max = 4; }) == "ConfigInvalid");
  CHECK(reject([](spkid::Config& c) { c.identify_mode = "psychic"; }) == "ConfigInvalid");

  nlohmann::json bad = spkid::config_to_json(spkid::Config{});
  bad["surprise"] = 1;
  CHECK(testutil::error_name([&] { spkid::config_from_json(bad); }) == "ConfigInvalid");
}
