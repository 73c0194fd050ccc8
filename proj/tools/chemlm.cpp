// Copyright 2026 the chemlm authors
// SPDX-License-Identifier: Apache-2.0
//
// Single pipeline executable. Every artifact is written atomically (temp
// file + rename) and accompanied by a run manifest recording inputs,
// seeds, the resolved config and content hashes.
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "chemlm/chemlm.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw chemlm::IoFailure("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void atomic_write(const std::string& path, const std::string& content) {
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw chemlm::IoFailure("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw chemlm::IoFailure("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string hash_hex(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(chemlm::fnv1a(bytes.data(), bytes.size())));
  return buf;
}

std::string file_hash(const std::string& path) { return hash_hex(read_file(path)); }

// The manifest sits next to the primary output as <out>.manifest.json.
void write_manifest(const std::string& primary_out, const std::string& command,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, const json& config,
                    std::optional<std::uint64_t> seed) {
  json m;
  m["command"] = command;
  m["config"] = config;
  if (seed) m["seed"] = *seed;
  json in = json::object(), out = json::object();
  for (const auto& p : inputs) in[p] = file_hash(p);
  for (const auto& p : outputs) out[p] = file_hash(p);
  m["inputs"] = std::move(in);
  m["outputs"] = std::move(out);
  atomic_write(primary_out + ".manifest.json", m.dump(2) + "\n");
}

std::vector<std::size_t> parse_sizes(const std::string& csv) {
  std::vector<std::size_t> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(static_cast<std::size_t>(std::stoull(item)));
  }
  if (out.empty()) throw std::invalid_argument("no sizes given");
  return out;
}

std::vector<double> parse_fracs(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  if (out.size() != 3) throw std::invalid_argument("--fracs needs exactly three values");
  return out;
}

json run_config_to_json(const chemlm::TrainRunConfig& c) {
  return {{"epochs", c.epochs},
          {"finetune_epoch_cap", c.finetune_epoch_cap},
          {"patience", c.patience},
          {"seed", c.seed},
          {"batch_size", c.batch_size},
          {"max_len", c.max_len},
          {"adam",
           {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2},
            {"eps", c.adam.eps}}},
          {"mlm",
           {{"mask_rate", c.mlm.mask_rate},
            {"mask_fraction", c.mlm.mask_fraction},
            {"random_fraction", c.mlm.random_fraction}}},
          {"model", chemlm::config_to_json(c.model)}};
}

// Partial override: only the keys present in the file are applied.
void apply_run_config(chemlm::TrainRunConfig& c, const json& j) {
  auto get = [&](const json& o, const char* key, auto& dst) {
    if (o.contains(key)) dst = o.at(key).get<std::decay_t<decltype(dst)>>();
  };
  get(j, "epochs", c.epochs);
  get(j, "finetune_epoch_cap", c.finetune_epoch_cap);
  get(j, "patience", c.patience);
  get(j, "batch_size", c.batch_size);
  get(j, "max_len", c.max_len);
  if (j.contains("adam")) {
    get(j.at("adam"), "lr", c.adam.lr);
    get(j.at("adam"), "beta1", c.adam.beta1);
    get(j.at("adam"), "beta2", c.adam.beta2);
    get(j.at("adam"), "eps", c.adam.eps);
  }
  if (j.contains("mlm")) {
    get(j.at("mlm"), "mask_rate", c.mlm.mask_rate);
    get(j.at("mlm"), "mask_fraction", c.mlm.mask_fraction);
    get(j.at("mlm"), "random_fraction", c.mlm.random_fraction);
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    get(m, "n_layers", c.model.n_layers);
    get(m, "n_heads", c.model.n_heads);
    get(m, "d_model", c.model.d_model);
    get(m, "d_ff", c.model.d_ff);
    get(m, "max_positions", c.model.max_positions);
    get(m, "dropout_rate", c.model.dropout_rate);
  }
}

chemlm::TrainRunConfig load_run_config(const std::string& config_path, std::uint64_t seed) {
  chemlm::TrainRunConfig c;
  c.seed = seed;
  if (!config_path.empty()) apply_run_config(c, json::parse(read_file(config_path)));
  return c;
}

json split_to_json(const chemlm::SplitIndices& sp) {
  return {{"version", 1},
          {"counts",
           {{"train", sp.train.size()}, {"valid", sp.valid.size()}, {"test", sp.test.size()}}},
          {"train", sp.train},
          {"valid", sp.valid},
          {"test", sp.test}};
}

chemlm::SplitIndices split_from_json(const json& j) {
  chemlm::SplitIndices sp;
  sp.train = j.at("train").get<std::vector<std::size_t>>();
  sp.valid = j.at("valid").get<std::vector<std::size_t>>();
  sp.test = j.at("test").get<std::vector<std::size_t>>();
  return sp;
}

chemlm::Tokenizer load_tokenizer(const std::string& path) {
  return chemlm::tokenizer_from_json(json::parse(read_file(path)));
}

std::string corpus_to_text(const chemlm::Corpus& c) {
  std::string out;
  for (const auto& line : c) out += line + "\n";
  return out;
}

std::string checkpoint_bytes(const chemlm::Checkpoint& ck) {
  // serialize through a temp file path-free: reuse save_checkpoint via temp
  fs::path tmp = fs::temp_directory_path() / ("chemlm_ck_" + std::to_string(::getpid()) + ".bin");
  chemlm::save_checkpoint(tmp.string(), ck);
  std::string bytes = read_file(tmp.string());
  fs::remove(tmp);
  return bytes;
}

json metrics_json(double roc, double prc, int best_epoch) {
  return {{"test_roc_auc", roc}, {"test_prc_auc", prc}, {"best_epoch", best_epoch}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chemlm: desk-scale molecular language model pipeline"};
  app.require_subcommand(1);

  // --- curate ---
  std::string cu_in, cu_out, cu_dedup = "exact";
  std::uint64_t cu_seed = 0;
  auto* cu = app.add_subcommand("curate", "trim, dedup and shuffle a corpus");
  cu->add_option("--in", cu_in, "input corpus, one molecule per line")->required();
  cu->add_option("--out", cu_out, "output corpus path")->required();
  cu->add_option("--seed", cu_seed, "shuffle seed")->required();
  cu->add_option("--dedup", cu_dedup, "exact | canonical")
      ->check(CLI::IsMember({"exact", "canonical"}));

  // --- subset ---
  std::string su_in, su_out, su_sizes;
  auto* su = app.add_subcommand("subset", "nested prefix subsets of a curated corpus");
  su->add_option("--in", su_in, "curated corpus")->required();
  su->add_option("--sizes", su_sizes, "comma-separated subset sizes")->required();
  su->add_option("--out", su_out, "output stem; files are <stem>.<size>.txt")->required();

  // --- split ---
  std::string sp_task, sp_label, sp_out, sp_fracs = "0.8,0.1,0.1";
  auto* sp = app.add_subcommand("split", "scaffold split of a task CSV");
  sp->add_option("--task", sp_task, "task CSV with a smiles column")->required();
  sp->add_option("--label", sp_label, "label column name")->required();
  sp->add_option("--out", sp_out, "split manifest JSON path")->required();
  sp->add_option("--fracs", sp_fracs, "train,valid,test fractions");

  // --- train-tokenizer ---
  std::string tt_in, tt_out, tt_kind = "regex";
  int tt_vocab = chemlm::kMaxVocabSize;
  auto* tt = app.add_subcommand("train-tokenizer", "train a regex or BPE tokenizer");
  tt->add_option("--in", tt_in, "training corpus")->required();
  tt->add_option("--kind", tt_kind, "regex | bpe")->check(CLI::IsMember({"regex", "bpe"}));
  tt->add_option("--vocab-size", tt_vocab, "target vocabulary size");
  tt->add_option("--out", tt_out, "tokenizer JSON path")->required();

  // --- to-selfies ---
  std::string ts_in, ts_out;
  auto* ts = app.add_subcommand("to-selfies", "convert a SMILES corpus to SELFIES lines");
  ts->add_option("--in", ts_in, "SMILES corpus")->required();
  ts->add_option("--out", ts_out, "SELFIES output path")->required();

  // --- pretrain ---
  std::string pt_in, pt_tok, pt_out, pt_config;
  std::uint64_t pt_seed = 0;
  auto* pt = app.add_subcommand("pretrain", "masked-language-model pretraining");
  pt->add_option("--in", pt_in, "pretraining corpus")->required();
  pt->add_option("--tokenizer", pt_tok, "tokenizer JSON")->required();
  pt->add_option("--out", pt_out, "output stem; writes .best.ckpt/.last.ckpt/.runlog.jsonl")
      ->required();
  pt->add_option("--seed", pt_seed, "run seed")->required();
  pt->add_option("--config", pt_config, "training config JSON (partial override)");

  // --- finetune ---
  std::string ft_task, ft_label, ft_split, ft_tok, ft_ckpt, ft_out, ft_config;
  std::uint64_t ft_seed = 0;
  auto* ft = app.add_subcommand("finetune", "classification finetuning with early stopping");
  ft->add_option("--task", ft_task, "task CSV")->required();
  ft->add_option("--label", ft_label, "label column name")->required();
  ft->add_option("--split", ft_split, "split manifest JSON")->required();
  ft->add_option("--tokenizer", ft_tok, "tokenizer JSON")->required();
  ft->add_option("--checkpoint", ft_ckpt, "pretrained checkpoint")->required();
  ft->add_option("--out", ft_out, "output stem; writes .best.ckpt/.runlog.jsonl/.metrics.json")
      ->required();
  ft->add_option("--seed", ft_seed, "run seed")->required();
  ft->add_option("--config", ft_config, "training config JSON (partial override)");

  // --- baseline ---
  std::string bl_task, bl_label, bl_split, bl_out;
  int bl_radius = 2, bl_width = 2048;
  auto* bl = app.add_subcommand("baseline", "fingerprint + logistic regression baseline");
  bl->add_option("--task", bl_task, "task CSV")->required();
  bl->add_option("--label", bl_label, "label column name")->required();
  bl->add_option("--split", bl_split, "split manifest JSON")->required();
  bl->add_option("--out", bl_out, "metrics JSON path")->required();
  bl->add_option("--radius", bl_radius, "fingerprint radius");
  bl->add_option("--width", bl_width, "fingerprint width (power of two)");

  // --- scaling-report ---
  std::string sc_in, sc_sizes, sc_task, sc_label, sc_split, sc_tok, sc_out, sc_config;
  std::string sc_seeds = "1,2,3";
  auto* sc = app.add_subcommand("scaling-report",
                                "pretrain on nested subsets, finetune, report the AUC trend");
  sc->add_option("--in", sc_in, "curated pretraining corpus")->required();
  sc->add_option("--sizes", sc_sizes, "comma-separated nested subset sizes")->required();
  sc->add_option("--task", sc_task, "task CSV")->required();
  sc->add_option("--label", sc_label, "label column name")->required();
  sc->add_option("--split", sc_split, "split manifest JSON")->required();
  sc->add_option("--tokenizer", sc_tok, "tokenizer JSON")->required();
  sc->add_option("--seeds", sc_seeds, "comma-separated run seeds");
  sc->add_option("--out", sc_out, "report JSON path")->required();
  sc->add_option("--config", sc_config, "training config JSON (partial override)");

  // --- attention-export ---
  std::string ae_ckpt, ae_tok, ae_mol, ae_out, ae_svg;
  int ae_layer = -1, ae_head = -1;
  auto* ae = app.add_subcommand("attention-export",
                                "export attention matrices for one molecule");
  ae->add_option("--checkpoint", ae_ckpt, "model checkpoint")->required();
  ae->add_option("--tokenizer", ae_tok, "tokenizer JSON")->required();
  ae->add_option("--molecule", ae_mol, "molecule string")->required();
  ae->add_option("--out", ae_out, "AttentionExport JSON path")->required();
  ae->add_option("--layer", ae_layer, "layer selector, -1 = all");
  ae->add_option("--head", ae_head, "head selector, -1 = all");
  ae->add_option("--svg", ae_svg, "heatmap stem; writes <stem>.L<l>H<h>.svg per matrix");

  // --- verify ---
  std::string vf_manifest;
  auto* vf = app.add_subcommand("verify", "recompute and check run-manifest content hashes");
  vf->add_option("--manifest", vf_manifest, "run manifest JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*cu) {
      auto mode = cu_dedup == "canonical" ? chemlm::DedupMode::CanonicalKey
                                          : chemlm::DedupMode::ExactString;
      chemlm::Corpus out = chemlm::curate(chemlm::read_lines(cu_in), cu_seed, mode);
      atomic_write(cu_out, corpus_to_text(out));
      write_manifest(cu_out, "curate", {cu_in}, {cu_out}, {{"dedup", cu_dedup}}, cu_seed);
      std::cout << "curated " << out.size() << " molecules\n";
    } else if (*su) {
      auto sizes = parse_sizes(su_sizes);
      auto subs = chemlm::subset(chemlm::read_lines(su_in), sizes);
      std::vector<std::string> outs;
      for (std::size_t i = 0; i < subs.size(); ++i) {
        std::string path = su_out + "." + std::to_string(sizes[i]) + ".txt";
        atomic_write(path, corpus_to_text(subs[i]));
        outs.push_back(path);
      }
      write_manifest(su_out, "subset", {su_in}, outs, {{"sizes", sizes}}, std::nullopt);
      std::cout << "wrote " << outs.size() << " subset files\n";
    } else if (*sp) {
      auto fr = parse_fracs(sp_fracs);
      auto task = chemlm::load_task_csv(chemlm::read_lines(sp_task), sp_label);
      auto split = chemlm::scaffold_split(task, fr[0], fr[1]);
      json j = split_to_json(split);
      j["task"] = sp_task;
      j["label"] = sp_label;
      j["dropped_rows"] = task.dropped_rows;
      atomic_write(sp_out, j.dump(2) + "\n");
      write_manifest(sp_out, "split", {sp_task}, {sp_out},
                     {{"label", sp_label}, {"fracs", fr}}, std::nullopt);
      std::cout << "split " << task.records.size() << " records into " << split.train.size()
                << "/" << split.valid.size() << "/" << split.test.size() << "\n";
    } else if (*tt) {
      auto corpus = chemlm::read_lines(tt_in);
      chemlm::Tokenizer tok = tt_kind == "bpe"
                                  ? chemlm::train_bpe_tokenizer(corpus, tt_vocab)
                                  : chemlm::train_regex_tokenizer(corpus, tt_vocab);
      atomic_write(tt_out, chemlm::tokenizer_to_json(tok).dump(2) + "\n");
      write_manifest(tt_out, "train-tokenizer", {tt_in}, {tt_out},
                     {{"kind", tt_kind}, {"vocab_size", tt_vocab}}, std::nullopt);
      std::cout << "trained " << tt_kind << " tokenizer, vocab " << tok.vocab.size() << "\n";
    } else if (*ts) {
      auto rep = chemlm::corpus_to_selfies(chemlm::read_lines(ts_in));
      atomic_write(ts_out, corpus_to_text(rep.selfies));
      write_manifest(ts_out, "to-selfies", {ts_in}, {ts_out},
                     {{"converted", rep.converted}, {"skipped", rep.skipped}}, std::nullopt);
      std::cout << "converted " << rep.converted << ", skipped " << rep.skipped << "\n";
    } else if (*pt) {
      auto cfg = load_run_config(pt_config, pt_seed);
      auto tok = load_tokenizer(pt_tok);
      auto res = chemlm::pretrain(chemlm::read_lines(pt_in), tok, cfg);
      std::string best = pt_out + ".best.ckpt", last = pt_out + ".last.ckpt";
      std::string log = pt_out + ".runlog.jsonl";
      atomic_write(best, checkpoint_bytes(res.best));
      atomic_write(last, checkpoint_bytes(res.last));
      atomic_write(log, chemlm::runlog_to_jsonl(res.log));
      std::vector<std::string> inputs = {pt_in, pt_tok};
      if (!pt_config.empty()) inputs.push_back(pt_config);
      write_manifest(pt_out, "pretrain", inputs, {best, last, log}, run_config_to_json(cfg),
                     pt_seed);
      std::cout << "pretrained " << cfg.epochs << " epochs, final loss "
                << res.log.epochs.back().train_loss << "\n";
    } else if (*ft) {
      auto cfg = load_run_config(ft_config, ft_seed);
      // finetuning defaults to its own epoch cap unless the config pins epochs
      bool epochs_pinned =
          !ft_config.empty() && json::parse(read_file(ft_config)).contains("epochs");
      if (!epochs_pinned) cfg.epochs = cfg.finetune_epoch_cap;
      cfg.epochs = std::min(cfg.epochs, cfg.finetune_epoch_cap);
      auto tok = load_tokenizer(ft_tok);
      auto task = chemlm::load_task_csv(chemlm::read_lines(ft_task), ft_label);
      auto split = split_from_json(json::parse(read_file(ft_split)));
      auto start = chemlm::load_checkpoint(ft_ckpt);
      auto res = chemlm::finetune(start, tok, task, split, cfg);
      std::string best = ft_out + ".best.ckpt", log = ft_out + ".runlog.jsonl";
      std::string met = ft_out + ".metrics.json";
      atomic_write(best, checkpoint_bytes(res.best));
      atomic_write(log, chemlm::runlog_to_jsonl(res.log));
      atomic_write(met,
                   metrics_json(res.test_roc_auc, res.test_prc_auc, res.log.best_epoch).dump(2) +
                       "\n");
      std::vector<std::string> inputs = {ft_task, ft_split, ft_tok, ft_ckpt};
      if (!ft_config.empty()) inputs.push_back(ft_config);
      write_manifest(ft_out, "finetune", inputs, {best, log, met}, run_config_to_json(cfg),
                     ft_seed);
      std::cout << "finetuned: test roc_auc " << res.test_roc_auc << ", prc_auc "
                << res.test_prc_auc << "\n";
    } else if (*bl) {
      auto task = chemlm::load_task_csv(chemlm::read_lines(bl_task), bl_label);
      auto split = split_from_json(json::parse(read_file(bl_split)));
      auto res = chemlm::train_baseline(task, split, bl_radius, bl_width, chemlm::BaselineHyper{});
      json j = metrics_json(res.test_roc_auc, res.test_prc_auc, 0);
      j.erase("best_epoch");
      j["iterations"] = res.iterations;
      atomic_write(bl_out, j.dump(2) + "\n");
      write_manifest(bl_out, "baseline", {bl_task, bl_split}, {bl_out},
                     {{"radius", bl_radius}, {"width", bl_width}}, std::nullopt);
      std::cout << "baseline: test roc_auc " << res.test_roc_auc << "\n";
    } else if (*sc) {
      auto base_cfg = load_run_config(sc_config, 0);
      auto tok = load_tokenizer(sc_tok);
      auto corpus = chemlm::read_lines(sc_in);
      auto sizes = parse_sizes(sc_sizes);
      auto subs = chemlm::subset(corpus, sizes);
      auto task = chemlm::load_task_csv(chemlm::read_lines(sc_task), sc_label);
      auto split = split_from_json(json::parse(read_file(sc_split)));
      std::vector<std::uint64_t> seeds;
      for (auto s : parse_sizes(sc_seeds)) seeds.push_back(s);

      json runs = json::array();
      // per subset size: deltas of the largest-vs-this across seeds
      std::vector<std::vector<double>> deltas(sizes.size());
      for (auto seed : seeds) {
        chemlm::TrainRunConfig pre = base_cfg, fine = base_cfg;
        pre.seed = seed;
        fine.seed = seed;
        fine.epochs = std::min(fine.epochs, fine.finetune_epoch_cap);
        auto rep = chemlm::scaling_experiment(subs, tok, task, split, pre, fine);
        json rows = json::array();
        for (std::size_t i = 0; i < rep.rows.size(); ++i) {
          const auto& r = rep.rows[i];
          rows.push_back({{"subset_size", r.subset_size},
                          {"test_roc_auc", r.test_roc_auc},
                          {"test_prc_auc", r.test_prc_auc},
                          {"delta_roc_auc", r.delta_roc_auc},
                          {"delta_prc_auc", r.delta_prc_auc}});
          deltas[i].push_back(r.delta_roc_auc);
        }
        runs.push_back({{"seed", seed}, {"rows", rows}});
      }
      json band = json::array();
      for (std::size_t i = 0; i < sizes.size(); ++i) {
        double mean = 0.0;
        for (double d : deltas[i]) mean += d;
        mean /= static_cast<double>(deltas[i].size());
        double sd = 0.0;
        if (deltas[i].size() > 1) {
          for (double d : deltas[i]) sd += (d - mean) * (d - mean);
          sd = std::sqrt(sd / static_cast<double>(deltas[i].size() - 1));
        }
        band.push_back({{"subset_size", sizes[i]},
                        {"mean_delta_roc_auc", mean},
                        {"band_low", mean - sd},
                        {"band_high", mean + sd}});
      }
      json j = {{"header",
                 "delta band is mean +/- 1 sample standard deviation across seeds "
                 "(68% interval under a normal assumption)"},
                {"runs", runs},
                {"delta_band", band}};
      atomic_write(sc_out, j.dump(2) + "\n");
      write_manifest(sc_out, "scaling-report", {sc_in, sc_task, sc_split, sc_tok}, {sc_out},
                     {{"sizes", sizes}, {"seeds", seeds},
                      {"config", run_config_to_json(base_cfg)}},
                     std::nullopt);
      std::cout << "scaling report over " << sizes.size() << " subsets x " << seeds.size()
                << " seeds\n";
    } else if (*ae) {
      auto tok = load_tokenizer(ae_tok);
      auto ck = chemlm::load_checkpoint(ae_ckpt);
      if (ck.config.vocab_size != tok.vocab.size())
        throw chemlm::ConfigMismatch("checkpoint vocab size does not match tokenizer");
      chemlm::TransformerModel model(ck.config, ck.params);
      auto ex = chemlm::export_attention(model, tok, ae_mol, ae_layer, ae_head);
      json j = chemlm::attention_export_to_json(ex);
      json diag = json::array();
      for (const auto& d : chemlm::bracket_diagnostic(ex))
        diag.push_back({{"layer", d.layer},
                        {"head", d.head},
                        {"mean_close_to_open", d.mean_close_to_open},
                        {"pair_count", d.pair_count}});
      j["bracket_diagnostic"] = std::move(diag);
      atomic_write(ae_out, j.dump(2) + "\n");
      std::vector<std::string> outs = {ae_out};
      if (!ae_svg.empty()) {
        for (const auto& rec : ex.attention) {
          std::string path = ae_svg + ".L" + std::to_string(rec.layer) + "H" +
                             std::to_string(rec.head) + ".svg";
          atomic_write(path, chemlm::attention_heatmap_svg(rec, ex.tokens));
          outs.push_back(path);
        }
      }
      write_manifest(ae_out, "attention-export", {ae_ckpt, ae_tok}, outs,
                     {{"molecule", ae_mol}, {"layer", ae_layer}, {"head", ae_head}},
                     std::nullopt);
      std::cout << "exported " << ex.attention.size() << " attention matrices\n";
    } else if (*vf) {
      json m = json::parse(read_file(vf_manifest));
      bool ok = true;
      for (const char* group : {"inputs", "outputs"}) {
        for (const auto& [path, expect] : m.at(group).items()) {
          std::string actual;
          try {
            actual = file_hash(path);
          } catch (const chemlm::IoFailure&) {
            actual = "<missing>";
          }
          if (actual != expect.get<std::string>()) {
            std::cerr << "hash mismatch: " << path << " expected " << expect << " got " << actual
                      << "\n";
            ok = false;
          }
        }
      }
      if (!ok) return 1;
      std::cout << "manifest verified\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
