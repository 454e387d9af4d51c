#pragma once

// Command-line surface: synthetic corpora, feature extraction, emotion
// encoder training, the experiment grid and standalone plots. Every command
// is a pure function of its arguments and input files.

#include "speechfuse/eval.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace speechfuse::cli {

using json = nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

inline json read_json_file(const std::filesystem::path& path) {
  const auto text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// Header-keyed CSV rows; used by the plot commands.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(std::string_view name, const std::string& source) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError(source + ": missing column '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
};

inline CsvTable read_csv(const std::filesystem::path& path) {
  CsvTable t;
  std::size_t ln = 0;
  for (const auto& raw : split(read_text_file(path), '\n')) {
    ++ln;
    const auto line = trim(raw);
    if (line.empty()) continue;
    auto fields = split(line, ',');
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw DataError(path.string() + ":" + std::to_string(ln) + ": expected " + std::to_string(t.header.size()) +
                      " fields, got " + std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) throw DataError(path.string() + ": empty CSV");
  return t;
}

inline std::string safe_file_stem(std::string_view id) {
  std::string s;
  for (char c : id) s += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' ? c : '_';
  return s.empty() ? "_" : s;
}

// ---------------------------------------------------------------------------
// Run configuration: input paths plus the experiment settings.

struct RunConfig {
  std::filesystem::path corpus;
  std::map<std::string, std::filesystem::path> embeddings;  // encoder name -> table file
  std::map<std::string, std::filesystem::path> aux;         // branch name -> emotion corpus
  std::filesystem::path out;
  eval::ExperimentConfig experiment;

  static json defaults_json() {
    json j;
    j["corpus"] = "corpus.jsonl";
    j["embeddings"] = json::object();
    j["aux"] = json::object();
    j["out"] = "run";
    j["experiment"] = eval::ExperimentConfig{}.to_json();
    return j;
  }

  // Relative paths resolve against base_dir; every path must exist.
  static RunConfig from_json(const json& j, const std::filesystem::path& base_dir) {
    eval::check_keys(j, {"corpus", "embeddings", "aux", "out", "experiment"}, "run config");
    auto path_of = [&](const json& v, const std::string& what) {
      if (!v.is_string()) throw ConfigError(what + " must be a path string");
      const std::filesystem::path p(v.get<std::string>());
      return p.is_absolute() ? p : base_dir / p;
    };
    auto existing = [&](const json& v, const std::string& what) {
      auto p = path_of(v, what);
      if (!std::filesystem::exists(p)) throw ConfigError(what + " '" + p.string() + "' does not exist");
      return p;
    };
    RunConfig c;
    if (!j.contains("corpus")) throw ConfigError("run config needs 'corpus'");
    if (!j.contains("out")) throw ConfigError("run config needs 'out'");
    if (!j.contains("experiment") || !j.at("experiment").is_object() || !j.at("experiment").contains("seed")) {
      throw ConfigError("run config needs 'experiment' with an explicit 'seed'");
    }
    c.corpus = existing(j.at("corpus"), "corpus");
    c.out = path_of(j.at("out"), "out");
    if (j.contains("embeddings")) {
      eval::check_keys(j.at("embeddings"), {"lm", "subword", "docvec", "wavenet", "vggish"}, "embeddings");
      for (const auto& [k, v] : j.at("embeddings").items()) c.embeddings[k] = existing(v, "embedding table " + k);
    }
    if (j.contains("aux")) {
      eval::check_keys(j.at("aux"), {"text", "covarep", "spectrogram"}, "aux");
      for (const auto& [k, v] : j.at("aux").items()) c.aux[k] = existing(v, "auxiliary corpus " + k);
    }
    c.experiment = eval::ExperimentConfig::from_json(j.at("experiment"));
    return c;
  }
};

inline embed::EncoderSet load_encoders(const std::map<std::string, std::filesystem::path>& paths,
                                       const embed::TextDims& td, const embed::AudioDims& ad) {
  embed::EncoderSet enc{td, ad, {}};
  for (const auto& [name, path] : paths) {
    auto t = embed::EmbeddingTable::load(path);
    if (t.spec().name != name) {
      throw DataError(path.string() + ": table is named '" + t.spec().name + "', expected '" + name + "'");
    }
    enc.tables.emplace(name, std::move(t));
  }
  // Dimension check against the configuration, before any computation.
  for (const auto& [name, dim] : std::initializer_list<std::pair<const char*, std::size_t>>{
           {"lm", td.lm}, {"subword", td.subword}, {"docvec", td.docvec}, {"wavenet", ad.wavenet}, {"vggish", ad.vggish}}) {
    try {
      enc.table(name, dim);
    } catch (const ConfigError& e) {
      throw DataError(e.what());
    }
  }
  return enc;
}

// ---------------------------------------------------------------------------
// Commands. Each returns the process exit code.

struct SynthArgs {
  std::filesystem::path out;
  int families = 150;
  std::uint64_t seed = 7;
  double text_strength = 0.8;
  double audio_strength = 0.8;
  bool no_audio = false;
  int sample_rate = 8000;
};

// Corpus, content-derived wavenet/vggish tables and a ready run config.
inline int cmd_synth(const SynthArgs& a, std::ostream& out) {
  SynthConfig sc;
  sc.n_families = a.families;
  sc.text_strength = a.text_strength;
  sc.audio_strength = a.audio_strength;
  sc.include_audio = !a.no_audio;
  sc.sample_rate_hz = a.sample_rate;
  auto corpus = synth_corpus(sc, a.seed);
  save_corpus(a.out / "corpus.jsonl", corpus);
  json cfg = RunConfig::defaults_json();
  cfg["experiment"]["seed"] = a.seed;
  cfg["experiment"]["sample_rate_hz"] = a.sample_rate;
  if (sc.include_audio) {
    corpus.base_dir = a.out;
    const auto tables = embed::audio_proxy_tables(corpus, embed::AudioDims{}, a.sample_rate);
    for (const auto& [name, t] : tables) {
      write_file_atomic(a.out / (name + ".emb"), t.to_text());
      cfg["embeddings"][name] = name + ".emb";
    }
  }
  write_file_atomic(a.out / "config.json", cfg.dump(2) + "\n");
  out << "wrote " << corpus.documents.size() << " documents, " << corpus.segment_count() << " segments to "
      << a.out.string() << "\n";
  return 0;
}

inline int cmd_corpus_stats(const std::filesystem::path& corpus_path, const std::filesystem::path& out_dir,
                            std::ostream& out) {
  const auto corpus = load_corpus(corpus_path);
  const auto stats = corpus_stats(corpus).to_csv();
  if (out_dir.empty()) {
    out << stats;
    return 0;
  }
  write_file_atomic(out_dir / "stats.csv", stats);
  write_file_atomic(out_dir / "heatmap_segment.csv", label_heatmap(corpus, HeatmapLevel::segment).to_csv());
  write_file_atomic(out_dir / "heatmap_document.csv", label_heatmap(corpus, HeatmapLevel::document).to_csv());
  out << "wrote stats.csv, heatmap_segment.csv, heatmap_document.csv to " << out_dir.string() << "\n";
  return 0;
}

struct ExtractArgs {
  std::filesystem::path corpus;
  std::filesystem::path out;
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  int n_mels = 26;
  int sample_rate = 8000;
  bool validate_only = false;
};

// One CSV per audio segment: the 8 time-domain columns then 12 MFCCs per
// frame. index.csv lists every audio segment; unreadable audio is listed
// with its reason and the run continues, exiting 2 at the end.
inline int cmd_extract_features(const ExtractArgs& a, std::ostream& out, std::ostream& err) {
  dsp::FrameConfig frame{a.frame_ms, a.hop_ms, dsp::Window::hann};
  frame.validate();
  if (a.n_mels < 12) throw ConfigError("n_mels must be >= 12 for 12 MFCCs");
  const auto corpus = load_corpus(a.corpus);
  if (a.validate_only) {
    out << "ok: " << corpus.documents.size() << " documents\n";
    return 0;
  }
  std::string index = "segment_id,file,frames,status,message\n";
  std::size_t written = 0, failed = 0;
  std::set<std::string> used;
  for (const auto& d : corpus.documents) {
    for (const auto& s : d.segments) {
      if (!s.has_audio()) continue;
      std::string file = safe_file_stem(s.segment_id);
      while (!used.insert(file).second) file += "_";
      file += ".csv";
      try {
        const auto audio = load_audio_ref(s.audio_path, corpus.base_dir, a.sample_rate);
        const auto td = dsp::time_features(audio, frame);
        const auto cep = dsp::mfcc(dsp::mel_spectrogram(audio, frame, a.n_mels), 12);
        FeatureMatrix fm;
        fm.columns = td.columns;
        for (int k = 0; k < 12; ++k) fm.columns.push_back("mfcc_" + std::to_string(k));
        fm.values.resize(td.values.rows(), 20);
        fm.values << td.values, cep.per_frame;
        write_file_atomic(a.out / file, fm.to_csv());
        index += s.segment_id + "," + file + "," + std::to_string(fm.rows()) + ",ok,\n";
        ++written;
      } catch (const DataError& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), ',', ';');
        index += s.segment_id + ",,0,error," + msg + "\n";
        err << "warning: " << s.segment_id << ": " << e.what() << "\n";
        ++failed;
      }
    }
  }
  write_file_atomic(a.out / "index.csv", index);
  out << "wrote " << written << " feature files to " << a.out.string();
  if (failed) out << ", " << failed << " segments failed";
  out << "\n";
  return failed ? 2 : 0;
}

struct TrainEmotionArgs {
  std::string branch;
  std::filesystem::path aux;
  std::filesystem::path out;
  std::filesystem::path net_config;
  std::map<std::string, std::string> embeddings;
  int synth_items = 0;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  std::optional<int> epochs;
  int sample_rate = 8000;
  bool validate_only = false;
};

// Snapshot JSON: branch, network settings, weights, input scaling and the
// accuracy on the training corpus.
inline int cmd_train_emotion(const TrainEmotionArgs& a, std::ostream& out, std::ostream& err) {
  const auto b = transfer::branch_from_string(a.branch);
  auto cfg = a.net_config.empty() ? transfer::EmotionNetConfig{}
                                  : transfer::EmotionNetConfig::from_json(read_json_file(a.net_config));
  if (a.seed) cfg.train.seed = *a.seed;
  if (a.lr) cfg.train.learning_rate = *a.lr;
  if (a.epochs) cfg.train.epochs = *a.epochs;
  cfg.train.validate();
  if (a.aux.empty() == (a.synth_items == 0)) throw ConfigError("give exactly one of an auxiliary corpus or --synth");
  std::map<std::string, std::filesystem::path> tables;
  for (const auto& [k, v] : a.embeddings) tables[k] = v;
  auto enc = load_encoders(tables, {}, {});
  transfer::EmotionCorpus items;
  if (a.synth_items > 0) {
    const auto seed = derive_seed(cfg.train.seed, {"aux", to_string(b)});
    items = b == transfer::Branch::text
                ? transfer::synth_text_emotion(a.synth_items, seed, enc)
                : transfer::synth_audio_emotion(b, a.synth_items, seed, transfer::AudioCue::prosody, cfg, a.sample_rate);
  } else {
    transfer::AuxContext ctx{&enc, cfg, a.sample_rate, {}};
    items = transfer::load_emotion_corpus(a.aux, b, ctx);
  }
  if (a.validate_only) {
    out << "ok: " << items.size() << " items\n";
    return 0;
  }
  auto trained = transfer::train_emotion_encoder(b, items, cfg);
  for (const auto& w : trained.warnings) err << "warning: " << w << "\n";
  const double acc = transfer::encoder_accuracy(trained.encoder, items);
  json snap;
  snap["branch"] = to_string(b);
  snap["config"] = cfg.to_json();
  snap["items"] = items.size();
  snap["train_accuracy"] = acc;
  snap["encoder"] = trained.encoder.to_json();
  write_file_atomic(a.out, snap.dump() + "\n");
  out << "branch " << to_string(b) << ": " << items.size() << " items, train accuracy " << fmt_fixed(acc, 4) << "\n";
  return 0;
}

struct RunArgs {
  std::filesystem::path config;
  std::optional<int> jobs;
  std::filesystem::path out;
  bool validate_only = false;
  bool print_defaults = false;
};

inline int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
  if (a.print_defaults) {
    out << RunConfig::defaults_json().dump(2) << "\n";
    return 0;
  }
  if (a.config.empty()) throw ConfigError("run needs --config");
  const json raw = read_json_file(a.config);
  auto rc = RunConfig::from_json(raw, a.config.has_parent_path() ? a.config.parent_path() : ".");
  if (a.jobs) rc.experiment.jobs = *a.jobs;
  if (!a.out.empty()) rc.out = a.out;
  rc.experiment.validate();
  const auto corpus = load_corpus(rc.corpus);
  if (corpus.documents.empty()) throw DataError(rc.corpus.string() + ": corpus has no documents");
  auto enc = load_encoders(rc.embeddings, rc.experiment.text_dims, rc.experiment.audio_dims);
  eval::ExperimentInputs in;
  in.corpus = &corpus;
  in.encoders = &enc;
  const std::map<std::string, std::optional<transfer::EmotionCorpus>*> slots{
      {"text", &in.aux_text}, {"covarep", &in.aux_covarep}, {"spectrogram", &in.aux_spectrogram}};
  for (const auto& [name, path] : rc.aux) {
    const auto b = transfer::branch_from_string(name);
    transfer::AuxContext ctx{&enc, rc.experiment.emotion_for(b), rc.experiment.sample_rate_hz, {}};
    *slots.at(name) = transfer::load_emotion_corpus(path, b, ctx);
  }
  if (a.validate_only) {
    out << "ok: " << corpus.documents.size() << " documents, " << corpus.segment_count() << " segments, "
        << rc.embeddings.size() << " embedding tables, " << rc.aux.size() << " auxiliary corpora\n";
    return 0;
  }
  const auto r = eval::run_experiment(in, rc.experiment);
  auto files = eval::write_artifacts(r, corpus, rc.out);
  for (const auto& w : r.warnings) err << "warning: " << w << "\n";

  std::size_t missing = 0;
  for (const auto& [_, c] : r.cells) missing += c.missing();
  // Thread count never changes results, so it stays out of the provenance.
  json settings = rc.experiment.to_json();
  settings.erase("jobs");
  json prov;
  prov["tool"] = "speechfuse";
  prov["version"] = kVersion;
  prov["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                  std::to_string(EIGEN_MINOR_VERSION);
  prov["config_hash"] = hex64(fnv1a64(settings.dump()));
  prov["corpus_hash"] = hex64(fnv1a64(save_corpus_string(corpus)));
  prov["seed"] = rc.experiment.seed;
  prov["config"] = settings;
  prov["cells"] = r.cells.size();
  prov["missing_cells"] = missing;
  prov["warnings"] = r.warnings;
  files.push_back("run.json");
  prov["files"] = files;
  write_file_atomic(rc.out / "run.json", prov.dump(2) + "\n");
  out << eval::table_csv(r);
  out << "artifacts in " << rc.out.string() << "\n";
  if (missing) {
    err << missing << " cells aborted; see failures.csv\n";
    return 3;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Plots from emitted CSVs.

inline std::string plot_roc(const std::filesystem::path& csv, const std::string& model, const std::string& title) {
  const auto t = read_csv(csv);
  const auto src = csv.string();
  const auto cm = t.col("modality", src), cmod = t.col("model", src), cf = t.col("fpr", src), ct = t.col("tpr", src);
  std::vector<plot::RocSeries> series;
  std::map<std::string, std::size_t> where;
  for (const auto& row : t.rows) {
    if (!model.empty() && row[cmod] != model) continue;
    const auto key = eval::model_display(row[cmod]) + " " + row[cm];
    auto [it, fresh] = where.emplace(key, series.size());
    if (fresh) series.push_back({key, {}, {}, 0.0});
    auto& s = series[it->second];
    s.fpr.push_back(parse_double(row[cf], src));
    s.tpr.push_back(parse_double(row[ct], src));
  }
  for (auto& s : series) {
    for (std::size_t i = 1; i < s.fpr.size(); ++i) s.auc += (s.fpr[i] - s.fpr[i - 1]) * (s.tpr[i] + s.tpr[i - 1]) / 2;
  }
  return plot::roc_svg(title.empty() ? "ROC: " + csv.stem().string() : title, series);
}

inline std::string plot_timeline(const std::filesystem::path& csv, const std::string& title) {
  const auto t = read_csv(csv);
  const auto src = csv.string();
  const auto ci = t.col("segment_index", src), cs = t.col("segment_id", src), cb = t.col("start_s", src),
             cd = t.col("duration_s", src), ce = t.col("predicted_emotion", src), cx = t.col("score", src);
  std::vector<plot::TimelineRow> rows;
  for (const auto& r : t.rows) {
    rows.push_back({static_cast<int>(parse_double(r[ci], src)), r[cs], parse_double(r[cb], src),
                    parse_double(r[cd], src), r[ce], parse_double(r[cx], src)});
  }
  return plot::timeline_svg(title.empty() ? "Predicted emotion per segment" : title, rows);
}

// Lines show segment tokens when a corpus is given, else segment ids.
inline std::string plot_attention(const std::filesystem::path& csv, const std::filesystem::path& corpus_path,
                                  const std::string& title) {
  const auto t = read_csv(csv);
  const auto src = csv.string();
  const auto cs = t.col("segment_id", src), cw = t.col("weight", src);
  std::map<std::string, std::string> text;
  if (!corpus_path.empty()) {
    for (const auto& d : load_corpus(corpus_path).documents) {
      for (const auto& s : d.segments) {
        std::string line;
        for (const auto& tok : s.tokens) line += (line.empty() ? "" : " ") + tok;
        text[s.segment_id] = line;
      }
    }
  }
  std::vector<std::string> lines;
  std::vector<double> weights;
  for (const auto& r : t.rows) {
    const auto it = text.find(r[cs]);
    lines.push_back(it == text.end() ? r[cs] : it->second);
    weights.push_back(parse_double(r[cw], src));
  }
  return plot::attention_svg(title.empty() ? "Attention" : title, lines, weights);
}

inline std::string plot_heatmap(const std::filesystem::path& corpus_path, const std::string& level,
                                const std::string& title) {
  if (level != "segment" && level != "document") throw ConfigError("heatmap level must be segment or document");
  const auto lv = level == "segment" ? HeatmapLevel::segment : HeatmapLevel::document;
  return plot::heatmap_svg(title.empty() ? "Label counts per " + level : title,
                           label_heatmap(load_corpus(corpus_path), lv));
}

// ---------------------------------------------------------------------------

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 1;
  if (dynamic_cast<const DataError*>(&e)) return 2;
  return 3;
}

// Parses `args` (without the program name) and runs one command.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal text/audio document classification toolkit", "speechfuse"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Write a planted-signal corpus, audio encoder tables and a run config");
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--families", sa.families, "Number of families")->check(CLI::PositiveNumber);
  synth->add_option("--seed", sa.seed, "Generator seed");
  synth->add_option("--text-strength", sa.text_strength, "Text signal strength in [0,1]");
  synth->add_option("--audio-strength", sa.audio_strength, "Audio signal strength in [0,1]");
  synth->add_flag("--no-audio", sa.no_audio, "Text only");
  synth->add_option("--sample-rate", sa.sample_rate, "Audio sample rate (Hz)");

  std::filesystem::path stats_corpus, stats_out;
  auto* stats = app.add_subcommand("corpus-stats", "Corpus statistics and label count matrices");
  stats->add_option("corpus", stats_corpus, "Corpus JSONL")->required();
  stats->add_option("--out", stats_out, "Directory for CSVs (stdout when omitted)");

  ExtractArgs ea;
  auto* extract = app.add_subcommand("extract-features", "Per-frame acoustic features for every audio segment");
  extract->add_option("corpus", ea.corpus, "Corpus JSONL")->required();
  extract->add_option("--out", ea.out, "Output directory")->required();
  extract->add_option("--frame-ms", ea.frame_ms, "Frame length (ms)");
  extract->add_option("--hop-ms", ea.hop_ms, "Hop (ms)");
  extract->add_option("--n-mels", ea.n_mels, "Mel bands");
  extract->add_option("--sample-rate", ea.sample_rate, "Expected sample rate (Hz)");
  extract->add_flag("--validate-only", ea.validate_only, "Check inputs without computing");

  TrainEmotionArgs ta;
  std::vector<std::string> emb_specs;
  std::uint64_t ta_seed = 0;
  double ta_lr = 0;
  int ta_epochs = 0;
  auto* train = app.add_subcommand("train-emotion", "Train a 4-class emotion encoder on an auxiliary corpus");
  train->add_option("--branch", ta.branch, "text, covarep or spectrogram")
      ->required()
      ->check(CLI::IsMember({"text", "covarep", "spectrogram"}));
  train->add_option("aux", ta.aux, "Auxiliary emotion corpus JSONL");
  train->add_option("--synth", ta.synth_items, "Generate this many planted-signal items instead");
  train->add_option("--out", ta.out, "Snapshot JSON path")->required();
  train->add_option("--net-config", ta.net_config, "Emotion network settings JSON");
  train->add_option("--embeddings", emb_specs, "name=path embedding tables (text branch)");
  auto* seed_opt = train->add_option("--seed", ta_seed, "Training seed");
  auto* lr_opt = train->add_option("--lr", ta_lr, "Learning rate");
  auto* ep_opt = train->add_option("--epochs", ta_epochs, "Epochs");
  train->add_option("--sample-rate", ta.sample_rate, "Audio sample rate (Hz)");
  train->add_flag("--validate-only", ta.validate_only, "Check inputs without training");

  RunArgs ra;
  int jobs = 0;
  auto* run = app.add_subcommand("run", "Run the full experiment grid and write all reports");
  run->add_option("--config", ra.config, "Run config JSON");
  auto* jobs_opt = run->add_option("--jobs", jobs, "Parallel cells")->check(CLI::PositiveNumber);
  run->add_option("--out", ra.out, "Override the output directory");
  run->add_flag("--validate-only", ra.validate_only, "Check config, corpus and tables without computing");
  run->add_flag("--print-defaults", ra.print_defaults, "Print the default run config");

  std::filesystem::path plot_in, plot_out, plot_corpus;
  std::string plot_title, plot_model, plot_level = "segment";
  auto* plot = app.add_subcommand("plot", "Render an SVG from emitted CSVs or a corpus");
  plot->require_subcommand(1);
  auto add_plot = [&](const char* name, const char* help, const char* input_help) {
    auto* p = plot->add_subcommand(name, help);
    p->add_option("input", plot_in, input_help)->required();
    p->add_option("--out", plot_out, "SVG path")->required();
    p->add_option("--title", plot_title, "Title");
    return p;
  };
  auto* p_roc = add_plot("roc", "ROC curves", "roc_<task>.csv");
  p_roc->add_option("--model", plot_model, "Only this model key");
  auto* p_tl = add_plot("timeline", "Emotion timeline strip", "timeline.csv");
  auto* p_att = add_plot("attention", "Attention-weighted transcript", "attention_document.csv");
  p_att->add_option("--corpus", plot_corpus, "Corpus for segment text");
  auto* p_hm = add_plot("heatmap", "Label count heatmap", "corpus JSONL");
  p_hm->add_option("--level", plot_level, "segment or document");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*synth) return cmd_synth(sa, out);
    if (*stats) return cmd_corpus_stats(stats_corpus, stats_out, out);
    if (*extract) return cmd_extract_features(ea, out, err);
    if (*train) {
      for (const auto& s : emb_specs) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--embeddings expects name=path, got '" + s + "'");
        ta.embeddings[s.substr(0, eq)] = s.substr(eq + 1);
      }
      if (*seed_opt) ta.seed = ta_seed;
      if (*lr_opt) ta.lr = ta_lr;
      if (*ep_opt) ta.epochs = ta_epochs;
      return cmd_train_emotion(ta, out, err);
    }
    if (*run) {
      if (*jobs_opt) ra.jobs = jobs;
      return cmd_run(ra, out, err);
    }
    std::string svg;
    if (*p_roc) svg = plot_roc(plot_in, plot_model, plot_title);
    else if (*p_tl) svg = plot_timeline(plot_in, plot_title);
    else if (*p_att) svg = plot_attention(plot_in, plot_corpus, plot_title);
    else if (*p_hm) svg = plot_heatmap(plot_in, plot_level, plot_title);
    write_file_atomic(plot_out, svg);
    out << "wrote " << plot_out.string() << "\n";
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace speechfuse::cli
