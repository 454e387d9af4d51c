// Acceptance report: one PASS/FAIL line per criterion, detail lines indented.
// Exit status is nonzero when a criterion fails that is not named with
// --known-fail <id>. Known failures still print FAIL.

#include "oracles.hpp"
#include "speechfuse/cli.hpp"
#include "speechfuse/eval.hpp"
#include "speechfuse/shallow.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>

using namespace speechfuse;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::vector<std::string> details;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fixed(double v, int digits = 4) { return fmt_fixed(v, digits); }

std::string sci(double v) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << v;
  return s.str();
}

// ---------------------------------------------------------------------------
// Gradient suite

template <class Net, class X>
double worst_rel_error(Net& net, const std::vector<X>& xs, const std::vector<Vec>& ys) {
  double worst = 0;
  for (const auto& r : nn::grad_check(net, xs, ys, 1e-5, 1e-4).rows) worst = std::max(worst, r.max_rel_error);
  return worst;
}

std::vector<std::pair<std::string, double>> gradient_errors() {
  std::vector<std::pair<std::string, double>> out;
  {
    nn::SequenceNetConfig c;
    c.input_dim = 3;
    c.hidden_dim = 4;
    c.penultimate_dim = 5;
    c.n_outputs = 3;
    nn::SequenceNet net(c);
    net.init(7);
    Rng rng(14);
    std::vector<nn::SeqInput> xs;
    std::vector<Vec> ys;
    for (int i = 0; i < 3; ++i) {
      xs.push_back({oracle::random_seq(rng, 3, 3), {}, {}});
      ys.push_back(nn::one_hot(i % 3, 3));
    }
    out.emplace_back("plain_lstm", worst_rel_error(net, xs, ys));
  }
  {
    nn::SequenceNetConfig c;
    c.hidden_dim = 4;
    c.penultimate_dim = 4;
    c.n_outputs = 3;
    c.conv = nn::ConvSpec{2, 3, 3, 1, 6};
    nn::SequenceNet net(c);
    net.init(17);
    Rng rng(18);
    std::vector<nn::SeqInput> xs;
    std::vector<Vec> ys;
    for (int i = 0; i < 2; ++i) {
      Mat img(7 + i, 6);
      for (Eigen::Index k = 0; k < img.size(); ++k) img.data()[k] = rng.uniform(-1, 1);
      xs.push_back({{}, img, {}});
      ys.push_back(nn::one_hot(2 - i, 3));
    }
    out.emplace_back("cnn_lstm", worst_rel_error(net, xs, ys));
  }
  {
    nn::SequenceNet net(fusion::unimodal_doc_config(4, 3, 3));
    net.init(26);
    Rng rng(27);
    std::vector<nn::SeqInput> xs;
    std::vector<Vec> ys;
    for (int i = 0; i < 3; ++i) {
      xs.push_back({oracle::random_seq(rng, 2 + i, 4), {}, {}});
      ys.push_back(Vec::Constant(1, i % 2));
    }
    out.emplace_back("unimodal_doc_rep", worst_rel_error(net, xs, ys));
  }
  {
    fusion::DocFusionConfig c;
    c.text_dim = 3;
    c.audio_dim = 2;
    c.text_hidden = 3;
    c.audio_hidden = 4;
    c.fused_dim = 4;
    fusion::DocFusionNet net(c);
    net.init(11);
    Rng rng(12);
    nn::randomize_params(net.params(), rng);
    std::vector<fusion::DocFusionInput> xs;
    std::vector<Vec> ys;
    for (int i = 0; i < 3; ++i) {
      fusion::DocFusionInput in;
      for (int u = 0; u <= i; ++u) in.units.push_back({oracle::random_seq(rng, 3, 3), oracle::random_seq(rng, 2, 2)});
      xs.push_back(in);
      ys.push_back(Vec::Constant(1, i % 2));
    }
    out.emplace_back("doc_fusion", worst_rel_error(net, xs, ys));
  }
  {
    fusion::SegFusionNet net({3, 2, 4, 3});
    net.init(20);
    Rng rng(21);
    nn::randomize_params(net.params(), rng);
    std::vector<fusion::SegFusionInput> xs;
    std::vector<Vec> ys;
    for (int i = 0; i < 3; ++i) {
      fusion::SegFusionInput in;
      for (int s = 0; s < 2 + i; ++s) in.segments.push_back({oracle::random_vec(rng, 3), oracle::random_vec(rng, 2)});
      xs.push_back(in);
      ys.push_back(Vec::Constant(1, i % 2));
    }
    out.emplace_back("seg_fusion", worst_rel_error(net, xs, ys));
  }
  return out;
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const auto errs = gradient_errors();
  const double secs = seconds_since(t0);
  Outcome o{secs < 60.0, {}};
  for (const auto& [name, e] : errs) {
    o.pass = o.pass && e < 1e-4;
    o.details.push_back(name + " max_rel_error=" + sci(e));
  }
  o.details.push_back("seconds=" + fixed(secs, 2));
  return o;
}

// ---------------------------------------------------------------------------
// Fusion oracle and gate invariants

fusion::DocFusionNet doc_net(int td, int ad, int h, int f, std::uint64_t seed) {
  fusion::DocFusionConfig c;
  c.text_dim = td;
  c.audio_dim = ad;
  c.text_hidden = h;
  c.audio_hidden = h + 1;
  c.fused_dim = f;
  fusion::DocFusionNet net(c);
  net.init(seed);
  return net;
}

fusion::SegFusionInput random_segments(Rng& rng, int n, int td, int ad) {
  fusion::SegFusionInput in;
  for (int i = 0; i < n; ++i) in.segments.push_back({oracle::random_vec(rng, td), oracle::random_vec(rng, ad)});
  return in;
}

Outcome fusion_oracle() {
  Rng rng(101);
  double doc_dev = 0, seg_dev = 0;
  const int instances = 100;
  for (int t = 0; t < instances; ++t) {
    const int td = rng.range(1, 5), ad = rng.range(1, 5), h = rng.range(1, 5), f = rng.range(1, 5);
    auto dn = doc_net(td, ad, h, f, 1000 + t);
    nn::randomize_params(dn.params(), rng);
    const auto L = oracle::random_seq(rng, rng.range(1, 6), td);
    const auto A = oracle::random_seq(rng, rng.range(1, 6), ad);
    const auto e = dn.embed({{{L, A}}});
    const auto ref = oracle::doc_fusion(dn, L, A);
    for (int k = 0; k < f; ++k) doc_dev = std::max(doc_dev, std::abs(e.h_la(k) - ref.h_la[k]));
    doc_dev = std::max({doc_dev, std::abs(e.text_gates[0] - ref.gates[0]), std::abs(e.audio_gates[0] - ref.gates[1])});

    fusion::SegFusionNet sn({td, ad, h, f});
    sn.init(2000 + t);
    nn::randomize_params(sn.params(), rng);
    const auto in = random_segments(rng, rng.range(1, 7), td, ad);
    const auto se = sn.embed(in);
    const auto sref = oracle::seg_fusion(sn, in);
    for (int k = 0; k < f; ++k) seg_dev = std::max(seg_dev, std::abs(se.h_la(k) - sref.h_la[k]));
    for (std::size_t i = 0; i < in.segments.size(); ++i) seg_dev = std::max(seg_dev, std::abs(se.seg_gates[i] - sref.gates[i]));
  }
  return {doc_dev <= 1e-12 && seg_dev <= 1e-12,
          {"instances=" + std::to_string(instances), "doc_fusion max_abs_dev=" + sci(doc_dev),
           "seg_fusion max_abs_dev=" + sci(seg_dev)}};
}

Outcome gate_invariants() {
  Rng rng(202);
  const int trials = 10000;
  long gates = 0, bad_gates = 0;
  double worst_sum = 0;
  auto check_gate = [&](double g) {
    ++gates;
    if (!(g > 0.0 && g < 1.0)) ++bad_gates;
  };
  auto dn = doc_net(3, 2, 3, 3, 5);
  fusion::SegFusionNet sn({3, 2, 3, 3});
  sn.init(6);
  nn::SequenceNet un(fusion::unimodal_doc_config(3, 3, 2));
  un.init(7);
  for (int t = 0; t < trials; ++t) {
    nn::randomize_params(dn.params(), rng, 2.0);
    nn::randomize_params(sn.params(), rng, 2.0);
    nn::randomize_params(un.params(), rng, 2.0);
    fusion::DocFusionInput din;
    const int units = rng.range(1, 3);
    for (int u = 0; u < units; ++u) din.units.push_back({oracle::random_seq(rng, rng.range(1, 4), 3), oracle::random_seq(rng, rng.range(1, 4), 2)});
    const auto de = dn.embed(din);
    for (double g : de.text_gates) check_gate(g);
    for (double g : de.audio_gates) check_gate(g);
    for (double g : sn.embed(random_segments(rng, rng.range(1, 6), 3, 2)).seg_gates) check_gate(g);
    const auto r = fusion::unimodal_doc_rep(un, oracle::random_seq(rng, rng.range(1, 8), 3));
    double s = 0;
    for (double w : r.weights) s += w;
    worst_sum = std::max(worst_sum, std::abs(s - 1.0));
  }
  return {bad_gates == 0 && worst_sum <= 1e-12,
          {"trials=" + std::to_string(trials), "gates_checked=" + std::to_string(gates) +
                                                   " outside_open_unit_interval=" + std::to_string(bad_gates),
           "attention max |sum-1|=" + sci(worst_sum)}};
}

// ---------------------------------------------------------------------------
// Folds, AUC, classifiers

CorpusManifest random_shape(Rng& rng, int families, int max_docs) {
  CorpusManifest m;
  for (int f = 0; f < families; ++f) {
    const int n = rng.range(1, max_docs);
    for (int d = 0; d < n; ++d) {
      DocumentRecord doc;
      doc.family_id = "f" + std::to_string(f);
      doc.document_id = doc.family_id + "-" + std::to_string(d);
      doc.subject_id = doc.document_id;
      doc.labels.disorder = static_cast<Disorder>(rng.below(4));
      m.documents.push_back(doc);
    }
  }
  return m;
}

Outcome fold_fuzz() {
  Rng rng(303);
  const int corpora = 1000;
  long split_violations = 0, unequal = 0, foreign = 0, test_changed = 0, oversampled_folds = 0;
  for (int trial = 0; trial < corpora; ++trial) {
    const int k = rng.range(2, 6);
    const auto corpus = random_shape(rng, rng.range(k, 30), 6);
    const auto plan = eval::grouped_kfold(corpus, k, rng.next_u64());
    std::map<std::string, std::set<int>> fam_folds;
    for (std::size_t d = 0; d < corpus.documents.size(); ++d) fam_folds[corpus.documents[d].family_id].insert(plan.doc_fold[d]);
    for (const auto& [_, folds] : fam_folds) split_violations += folds.size() != 1;
    for (int fold = 0; fold < k; ++fold) {
      const auto train = plan.train_docs(fold);
      const auto before = plan.test_docs(fold);
      std::vector<int> labels;
      for (auto d : train) labels.push_back(static_cast<int>(corpus.documents[d].labels.disorder));
      if (std::set<int>(labels.begin(), labels.end()).size() < 2) continue;
      ++oversampled_folds;
      const auto over = eval::random_oversample(train, labels, rng.next_u64());
      const std::set<std::size_t> train_set(train.begin(), train.end());
      std::map<int, int> counts;
      for (auto d : over) {
        foreign += train_set.count(d) == 0;
        ++counts[static_cast<int>(corpus.documents[d].labels.disorder)];
      }
      for (const auto& [_, c] : counts) unequal += c != counts.begin()->second;
      test_changed += plan.test_docs(fold) != before;
    }
  }
  return {split_violations + unequal + foreign + test_changed == 0,
          {"corpora=" + std::to_string(corpora) + " oversampled_folds=" + std::to_string(oversampled_folds),
           "family_split_violations=" + std::to_string(split_violations),
           "unequal_class_counts=" + std::to_string(unequal) + " non_train_indices=" + std::to_string(foreign) +
               " test_sets_altered=" + std::to_string(test_changed)}};
}

double pair_auc(const std::vector<double>& s, const std::vector<int>& y) {
  long long num = 0, p = 0, n = 0;
  for (int v : y) (v ? p : n) += 1;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      num += s[i] > s[j] ? 2 : (s[i] == s[j] ? 1 : 0);
    }
  }
  return static_cast<double>(num) / (2.0 * static_cast<double>(p) * static_cast<double>(n));
}

Outcome auc_oracle() {
  Rng rng(404);
  const int instances = 500;
  int mismatches = 0, tied_instances = 0;
  for (int t = 0; t < instances; ++t) {
    const int n = rng.range(2, 120);
    // Few distinct score levels give heavy ties.
    const int levels = t % 3 == 0 ? rng.range(1, 4) : rng.range(2, 40);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(static_cast<std::uint64_t>(levels))) / levels;
      y[i] = rng.below(2);
    }
    y[0] = 1;
    y[1] = 0;
    tied_instances += std::set<double>(s.begin(), s.end()).size() < s.size();
    mismatches += eval::roc_auc(s, y).auc != pair_auc(s, y);
  }
  return {mismatches == 0,
          {"instances=" + std::to_string(instances) + " with_ties=" + std::to_string(tied_instances),
           "inexact_matches=" + std::to_string(mismatches)}};
}

shallow::Dataset blobs(int n, int d, double sigma, double distance, std::uint64_t seed) {
  Rng rng(seed);
  shallow::Dataset ds;
  ds.X.resize(n, d);
  for (int i = 0; i < n; ++i) {
    const int c = i % 2;
    ds.y.push_back(c);
    for (int j = 0; j < d; ++j) ds.X(i, j) = sigma * rng.normal() + (j == 0 && c ? distance : 0.0);
  }
  return ds;
}

Outcome classifier_sanity() {
  Outcome o{true, {}};
  const auto train = blobs(200, 2, 0.1, 5.0, 1);
  const auto test = blobs(200, 2, 0.1, 5.0, 2);
  for (const auto& name : shallow::classifier_names()) {
    auto m = shallow::make_classifier(name, shallow::ShallowConfig{}, 3);
    m->fit(train.X, train.y);
    const double acc = shallow::accuracy(m->predict(test.X), test.y);
    o.pass = o.pass && acc >= 0.99;
    o.details.push_back(name + " test_accuracy=" + fixed(acc));
  }

  // Mirror-symmetric classes put the analytic boundary through the origin
  // with normal S^-1 (mu1 - mu0), S the pooled covariance plus the same
  // trace-scaled ridge the classifier applies.
  Rng rng(4);
  Mat X(400, 3);
  std::vector<int> y;
  const Vec centre = (Vec(3) << 1.0, -0.5, 2.0).finished();
  for (int i = 0; i < 200; ++i) {
    Vec p(3);
    for (int j = 0; j < 3; ++j) p(j) = rng.normal();
    p += centre;
    X.row(2 * i) = p.transpose();
    X.row(2 * i + 1) = -p.transpose();
    y.push_back(1);
    y.push_back(0);
  }
  shallow::Lda lda;
  lda.fit(X, y);
  Vec mu1 = Vec::Zero(3);
  for (int i = 0; i < 400; i += 2) mu1 += X.row(i).transpose();
  mu1 /= 200;
  Mat S = Mat::Zero(3, 3);
  for (int i = 0; i < 400; ++i) {
    const Vec d = X.row(i).transpose() - (y[i] ? mu1 : Vec(-mu1));
    S += d * d.transpose();
  }
  S /= 398.0;
  S.diagonal().array() += 1e-6 * S.trace() / 3.0;
  const Vec w = S.inverse() * (2.0 * mu1);
  const double worst = std::max(std::abs(lda.intercept()) / lda.coef().norm(),
                                (lda.coef().normalized() - w.normalized()).norm());
  o.pass = o.pass && worst <= 1e-6;
  o.details.push_back("lda deviation from analytic hyperplane=" + sci(worst));
  return o;
}

// ---------------------------------------------------------------------------
// DSP

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

Outcome dsp_suite() {
  Outcome o{true, {}};
  const auto td = dsp::time_features(sine_wave(220, 1.0, 16000), dsp::FrameConfig{40, 10, dsp::Window::hann});
  std::vector<double> pitch;
  for (Eigen::Index f = 0; f < td.values.rows(); ++f) pitch.push_back(td.values(f, 0));
  const double rel = std::abs(median(pitch) - 220.0) / 220.0;
  o.pass = o.pass && rel < 0.015;
  o.details.push_back("220Hz median pitch=" + fixed(median(pitch), 3) + " rel_error=" + sci(rel));

  double dct_dev = 0;
  for (int n : {8, 13, 26, 40, 64}) {
    const Mat d = dsp::dct_matrix(n, n);
    dct_dev = std::max(dct_dev, (d * d.transpose() - Mat::Identity(n, n)).cwiseAbs().maxCoeff());
  }
  o.pass = o.pass && dct_dev <= 1e-12;
  o.details.push_back("dct max |D D^T - I|=" + sci(dct_dev));

  AudioBuffer quiet;
  quiet.sample_rate_hz = 16000;
  quiet.samples.assign(8000, 0.0);
  const auto q = dsp::time_features(quiet, dsp::FrameConfig{});
  const double energy = q.values.col(1).cwiseAbs().maxCoeff(), voicing = q.values.col(3).cwiseAbs().maxCoeff();
  o.pass = o.pass && energy == 0.0 && voicing == 0.0;
  o.details.push_back("silence max energy=" + sci(energy) + " max voicing=" + sci(voicing));

  const auto spec = dsp::mel_spectrogram(sine_wave(440, 1.0, 16000), dsp::FrameConfig{}, 40);
  Vec mean = spec.matrix.colwise().mean().transpose();
  Eigen::Index best = 0;
  mean.maxCoeff(&best);
  const double lo = spec.mel_edges_hz[best], hi = spec.mel_edges_hz[best + 2];
  o.pass = o.pass && lo < 440.0 && 440.0 < hi;
  o.details.push_back("440Hz peak mel filter " + std::to_string(best) + " spans " + fixed(lo, 1) + "-" + fixed(hi, 1) + " Hz");
  return o;
}

// ---------------------------------------------------------------------------
// CLI determinism

std::map<std::string, std::string> dir_bytes(const fs::path& dir) {
  std::map<std::string, std::string> m;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) m[fs::relative(e.path(), dir).string()] = read_text_file(e.path());
  }
  return m;
}

int invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  return cli::run_cli(args, out, err);
}

Outcome cli_determinism(const fs::path& root) {
  fs::remove_all(root);
  fs::create_directories(root);
  SynthConfig s;
  s.n_families = 12;
  s.docs_per_family_max = 3;
  s.segments_per_doc_max = 4;
  s.duration_max_s = 0.6;
  save_corpus(root / "corpus.jsonl", synth_corpus(s, 11));
  const nlohmann::json experiment{
      {"seed", 5},
      {"folds", 3},
      {"tasks", {"control", "depression"}},
      {"text_dims", {{"lm", 16}, {"subword", 8}, {"docvec", 8}, {"emotion", 8}}},
      {"audio_dims", {{"wavenet", 4}, {"vggish", 8}, {"emotion", 8}}},
      {"frame", {{"frame_len_ms", 25.0}, {"hop_ms", 20.0}}},
      {"doc_hidden", 8},
      {"doc_dim", 8},
      {"fusion_hidden", 8},
      {"fused_dim", 8},
      {"compress_hidden", 8},
      {"compress_dim", 8},
      {"doc_train", {{"epochs", 2}}},
      {"fusion_train", {{"epochs", 2}}},
      {"compress_train", {{"epochs", 1}}},
      {"fine_tune_train", {{"epochs", 1}}},
      {"emotion", {{"hidden", 8}, {"train", {{"epochs", 2}}}}},
      {"aux_text_items", 40},
      {"aux_audio_items", 12},
      {"shallow", {{"forest", {{"n_trees", 10}}}}}};
  write_file_atomic(root / "config.json",
                    nlohmann::json{{"corpus", "corpus.jsonl"}, {"out", "run"}, {"experiment", experiment}}.dump(2));
  const auto c = (root / "corpus.jsonl").string();
  const std::vector<std::pair<std::string, std::vector<std::string>>> commands{
      {"synth", {"synth", "--out", (root / "synth").string(), "--families", "4", "--seed", "9"}},
      {"corpus-stats", {"corpus-stats", c, "--out", (root / "stats").string()}},
      {"extract-features", {"extract-features", c, "--out", (root / "features").string()}},
      {"train-emotion", {"train-emotion", "--branch", "covarep", "--synth", "24", "--epochs", "2", "--out",
                         (root / "emotion" / "covarep.json").string()}},
      {"run", {"run", "--config", (root / "config.json").string()}},
      {"plot roc", {"plot", "roc", (root / "run" / "roc_control.csv").string(), "--out", (root / "plots" / "roc.svg").string()}},
      {"plot timeline",
       {"plot", "timeline", (root / "run" / "timeline.csv").string(), "--out", (root / "plots" / "timeline.svg").string()}},
      {"plot attention",
       {"plot", "attention", (root / "run" / "attention_document.csv").string(), "--corpus", c, "--out",
        (root / "plots" / "attention.svg").string()}},
      {"plot heatmap", {"plot", "heatmap", c, "--out", (root / "plots" / "heatmap.svg").string()}},
  };
  Outcome o{true, {}};
  for (const auto& [name, args] : commands) {
    const int first = invoke(args);
    const auto a = dir_bytes(root);
    const int second = invoke(args);
    const auto b = dir_bytes(root);
    const bool same = first == 0 && second == 0 && a == b;
    o.pass = o.pass && same;
    o.details.push_back(name + (same ? " identical" : " differs (exit " + std::to_string(first) + "/" +
                                                          std::to_string(second) + ")"));
  }
  return o;
}

// ---------------------------------------------------------------------------
// End-to-end planted-signal runs

struct E2eRun {
  CorpusManifest corpus;
  eval::ExperimentResult result;
  double seconds = 0;
};

eval::ExperimentConfig e2e_config() {
  return eval::ExperimentConfig::from_json(nlohmann::json{{"seed", 1},
                                                          {"fusion_input", "doc_vectors"},
                                                          {"doc_hidden", 16},
                                                          {"doc_dim", 16},
                                                          {"frame", {{"frame_len_ms", 25.0}, {"hop_ms", 20.0}}}});
}

E2eRun run_e2e(double strength, int jobs, bool oversample = true) {
  const auto t0 = Clock::now();
  E2eRun run;
  SynthConfig sc;
  sc.n_families = 150;
  sc.text_strength = strength;
  sc.audio_strength = strength;
  run.corpus = synth_corpus(sc, 7);
  embed::EncoderSet enc;
  auto cfg = e2e_config();
  cfg.jobs = jobs;
  cfg.oversample = oversample;
  enc.tables = embed::audio_proxy_tables(run.corpus, cfg.audio_dims, sc.sample_rate_hz);
  eval::ExperimentInputs in;
  in.corpus = &run.corpus;
  in.encoders = &enc;
  run.result = eval::run_experiment(in, cfg);
  run.seconds = seconds_since(t0);
  return run;
}

double cell_accuracy(const eval::ExperimentResult& r, const std::string& task, const std::string& mod,
                     const std::string& model) {
  const auto it = r.cells.find({task, mod, model});
  if (it == r.cells.end() || it->second.missing()) return std::nan("");
  return it->second.pooled().accuracy();
}

Outcome planted_signal(const E2eRun& run) {
  const auto& r = run.result;
  Outcome o{!r.any_missing(), {}};
  double multi_sum = 0;
  int n = 0;
  bool beats = true;
  for (auto t : r.config.tasks) {
    const std::string task = to_string(t);
    const double text = cell_accuracy(r, task, "text", "rf"), audio = cell_accuracy(r, task, "audio", "rf"),
                 multi = cell_accuracy(r, task, "multi", "rf");
    beats = beats && multi > text && multi > audio;
    multi_sum += multi;
    ++n;
    o.details.push_back(task + " rf text=" + fixed(100 * text, 2) + " audio=" + fixed(100 * audio, 2) +
                        " multi=" + fixed(100 * multi, 2));
  }
  const double mean = n ? multi_sum / n : 0.0;
  o.details.push_back("rf multi mean over tasks=" + fixed(100 * mean, 2) + " (target >= 90.00)");
  o.details.push_back(std::string("rf multi strictly above both unimodal rf cells in every task: ") +
                      (beats ? "yes" : "no"));
  o.pass = o.pass && mean >= 0.90 && beats;
  return o;
}

// Every non-missing cell must lie within majority +/- 3 sqrt(m(1-m)/n), with
// m the majority rate among that task's evaluated documents.
struct BandCount {
  int cells = 0, outside = 0, above = 0;
  // Against m(1-q) + (1-m)q, the accuracy of predictions independent of the
  // label given the cell's own positive-prediction rate q.
  int outside_independent = 0;
  std::map<std::string, std::pair<double, double>> z_range;  // per task
};

BandCount majority_band(const eval::ExperimentResult& r) {
  BandCount b;
  for (const auto& [k, c] : r.cells) {
    if (c.missing()) continue;
    const auto p = c.pooled();
    const double n = static_cast<double>(p.n());
    const double pos = static_cast<double>(p.tp + p.fn) / n;
    const double m = std::max(pos, 1.0 - pos);
    const double sigma = std::sqrt(m * (1 - m) / n);
    const double z = (p.accuracy() - m) / sigma;
    const double q = static_cast<double>(p.tp + p.fp) / n;
    const double chance = pos * q + (1 - pos) * (1 - q);
    const double chance_sigma = std::sqrt(std::max(chance * (1 - chance), 1e-12) / n);
    b.outside_independent += std::abs(p.accuracy() - chance) > 3.0 * chance_sigma;
    ++b.cells;
    b.outside += std::abs(z) > 3.0;
    b.above += z > 3.0;
    auto& w = b.z_range.try_emplace(k.task, z, z).first->second;
    w.first = std::min(w.first, z);
    w.second = std::max(w.second, z);
  }
  return b;
}

// Graded on the standard pipeline. A second run without oversampling is
// reported for diagnosis only: balanced training pulls predictions off the
// majority class, which lowers accuracy without any signal being present.
Outcome null_signal(const E2eRun& run, const std::optional<E2eRun>& no_oversample) {
  Outcome o{!run.result.any_missing(), {}};
  const auto b = majority_band(run.result);
  for (const auto& [task, w] : b.z_range) {
    o.details.push_back(task + " z range [" + fixed(w.first, 2) + ", " + fixed(w.second, 2) + "]");
  }
  o.details.push_back("cells=" + std::to_string(b.cells) + " outside_3sigma=" + std::to_string(b.outside) +
                      " above_plus_3sigma=" + std::to_string(b.above));
  o.pass = o.pass && b.outside == 0;
  o.details.push_back("diagnostic, band around label-independent chance: outside_3sigma=" +
                      std::to_string(b.outside_independent));
  if (no_oversample) {
    const auto d = majority_band(no_oversample->result);
    o.details.push_back("diagnostic, oversampling off: cells=" + std::to_string(d.cells) + " outside_3sigma=" +
                        std::to_string(d.outside) + " above_plus_3sigma=" + std::to_string(d.above));
  }
  return o;
}

// Table 2 layout: model rows then the two text baselines; Text/Audio/Multi
// per task; baselines dashed outside the text column.
Outcome report_structure(const eval::ExperimentResult& r) {
  const auto csv = eval::table_csv(r);
  std::vector<std::vector<std::string>> rows;
  for (const auto& line : split(csv, '\n')) {
    if (!line.empty()) rows.push_back(split(line, ','));
  }
  std::vector<std::string> header{"model"};
  for (auto t : {"control", "depression", "bipolar", "schizophrenia"}) {
    for (auto m : {"Text", "Audio", "Multi"}) header.push_back(std::string(t) + " " + m);
  }
  std::vector<std::string> names{"model", "LSTM", "RF", "SVM", "KNN", "LDA", "NB", "tf-idf+SVM", "BOW+SVM"};
  bool ok = !rows.empty() && rows[0] == header && rows.size() == names.size();
  for (std::size_t i = 1; ok && i < rows.size(); ++i) {
    ok = rows[i].size() == header.size() && rows[i][0] == names[i];
    const bool baseline = i >= rows.size() - 2;
    for (std::size_t c = 1; ok && c < rows[i].size(); ++c) {
      const bool text_col = (c - 1) % 3 == 0;
      if (baseline && !text_col) ok = rows[i][c] == "-";
      else ok = rows[i][c] != "-" && rows[i][c] != "NA" && rows[i][c].find('.') != std::string::npos;
    }
  }
  Outcome o{ok, {}};
  std::istringstream lines(csv);
  for (std::string line; std::getline(lines, line);) o.details.push_back(line);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> known_fail;
  bool skip_e2e = false, skip_diagnostics = false;
  int jobs = 1;
  fs::path scratch = fs::temp_directory_path() / "speechfuse_acceptance";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--known-fail" && i + 1 < argc) known_fail.insert(argv[++i]);
    else if (a == "--skip-e2e") skip_e2e = true;
    else if (a == "--skip-diagnostics") skip_diagnostics = true;
    else if (a == "--jobs" && i + 1 < argc) jobs = std::atoi(argv[++i]);
    else if (a == "--scratch" && i + 1 < argc) scratch = argv[++i];
    else {
      std::cerr << "usage: acceptance [--known-fail ID]... [--skip-e2e] [--skip-diagnostics] [--jobs N] [--scratch DIR]\n";
      return 2;
    }
  }

  int unexpected = 0;
  auto report = [&](const std::string& id, const Outcome& o) {
    const bool known = known_fail.count(id) > 0;
    std::cout << (o.pass ? "PASS " : "FAIL ") << id << (!o.pass && known ? " (known failure)" : "") << "\n";
    for (const auto& d : o.details) std::cout << "    " << d << "\n";
    std::cout.flush();
    if (!o.pass && !known) ++unexpected;
  };
  auto guarded = [&](const std::string& id, const std::function<Outcome()>& fn) {
    try {
      report(id, fn());
    } catch (const std::exception& e) {
      report(id, {false, {std::string("exception: ") + e.what()}});
    }
  };

  guarded("gradient_suite", gradient_suite);
  guarded("fusion_oracle", fusion_oracle);
  guarded("gate_invariants", gate_invariants);
  guarded("fold_integrity_fuzz", fold_fuzz);
  guarded("auc_oracle", auc_oracle);
  guarded("classifier_sanity", classifier_sanity);
  guarded("dsp_suite", dsp_suite);
  guarded("cli_determinism", [&] { return cli_determinism(scratch / "cli"); });

  if (!skip_e2e) {
    std::optional<E2eRun> planted;
    guarded("e2e_planted_signal", [&] {
      planted = run_e2e(0.8, jobs);
      return planted_signal(*planted);
    });
    guarded("e2e_runtime", [&] {
      if (!planted) throw RuntimeFailure("planted-signal run did not complete");
      return Outcome{planted->seconds < 600.0, {"seconds=" + fixed(planted->seconds, 1) + " (limit 600)",
                                                "jobs=" + std::to_string(jobs)}};
    });
    guarded("table2_report_structure", [&] {
      if (!planted) throw RuntimeFailure("planted-signal run did not complete");
      return report_structure(planted->result);
    });
    guarded("e2e_null_signal", [&] {
      const auto graded = run_e2e(0.0, jobs);
      std::optional<E2eRun> diag;
      if (!skip_diagnostics) diag = run_e2e(0.0, jobs, false);
      return null_signal(graded, diag);
    });
  }

  std::cout << (unexpected ? "ACCEPTANCE: " + std::to_string(unexpected) + " unexpected failure(s)\n"
                           : std::string("ACCEPTANCE: no unexpected failures\n"));
  return unexpected ? 1 : 0;
}
