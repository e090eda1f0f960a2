/*
 * Copyright 2026 The fairshot Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FAIRSHOT_CLI_HPP
#define FAIRSHOT_CLI_HPP

#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fairshot/harness.hpp"

namespace fairshot::cli {

namespace detail {

enum class Kind { string, number, count, strings, counts };

struct Flag {
  const char* name;  // command-line flag
  const char* key;   // config key
  Kind kind;
  const char* help;
};

// Flags shared by `run` and `sweep`; each overrides the config key it names.
inline const std::vector<Flag>& spec_flags() {
  static const std::vector<Flag> flags = {
      {"--method", "method", Kind::string, "BAC, BADR, BAS, BACP, BASAV or BASAV-KNN"},
      {"--label", "label", Kind::string, "display name in reports"},
      {"--corpus", "corpus", Kind::string, "training corpus CSV"},
      {"--test-corpus", "test_corpus", Kind::string, "held-out corpus CSV (otherwise split)"},
      {"--embeddings", "embeddings", Kind::string, "embedding file"},
      {"--test-embeddings", "test_embeddings", Kind::string, "embedding file for the test corpus"},
      {"--train-fraction", "train_fraction", Kind::number, "per-label training share when splitting"},
      {"--seed", "seeds", Kind::counts, "run seed(s)"},
      {"--alpha", "alpha", Kind::number, "annotated seed-set fraction"},
      {"--epsilon-annot", "epsilon_annot", Kind::number, "annotation-route threshold"},
      {"--epsilon-cluster", "epsilon_cluster", Kind::number, "partition-route threshold"},
      {"--knn-k", "knn_k", Kind::count, "neighbours for propagation"},
      {"--knn-scope", "knn_scope", Kind::string, "global or per-label"},
      {"--beta", "beta", Kind::number, "L2 weight on the primary head"},
      {"--beta0", "beta0", Kind::number, "base weight for disparity-scaled regularisation"},
      {"--beta-scope", "beta_scope", Kind::string, "per-label or global"},
      {"--lambda", "lambda", Kind::number, "bias-term weight"},
      {"--learning-rate", "learning_rate", Kind::number, "SGD step size"},
      {"--epochs", "epochs", Kind::count, "training epochs"},
      {"--batch-size", "batch_size", Kind::count, "minibatch size"},
      {"--hidden-dim", "hidden_dim", Kind::count, "shared projection width (0: none)"},
      {"--bias-objective", "bias_objective", Kind::string, "subtract or invert"},
      {"--l2-form", "l2_form", Kind::string, "squared or plain"},
      {"--kmeans-max-iter", "kmeans_max_iter", Kind::count, "k-means iteration cap"},
      {"--kmeans-tol", "kmeans_tol", Kind::number, "k-means centroid tolerance"},
      {"--kmeans-restarts", "kmeans_restarts", Kind::count, "k-means seedings to keep the best of"},
      {"--classifier-epochs", "classifier_epochs", Kind::count, "attribute classifier epochs"},
      {"--classifier-learning-rate", "classifier_learning_rate", Kind::number, "attribute classifier step"},
      {"--classifier-batch-size", "classifier_batch_size", Kind::count, "attribute classifier batch"},
      {"--tokenizer", "tokenizer", Kind::string, "lower-strip or whitespace"},
      {"--labels", "labels", Kind::strings, "label names in id order"},
      {"--units", "units", Kind::strings, "fairness units as label:attribute"},
      {"--evaluate-on", "evaluate_on", Kind::string, "test or all"},
  };
  return flags;
}

struct SpecOptions {
  std::string config;
  std::vector<std::string> attributes;
  std::map<std::string, std::vector<std::string>> raw;
  std::map<std::string, CLI::Option*> opts;
};

inline void add_spec_options(CLI::App& app, SpecOptions& so) {
  app.add_option("--config", so.config, "JSON config; flags override its keys");
  app.add_option("--attribute", so.attributes, "attribute as name=v1,v2 (repeatable)")->take_all();
  for (const auto& f : spec_flags()) {
    auto& slot = so.raw[f.key];
    auto* opt = app.add_option(f.name, slot, f.help);
    if (f.kind == Kind::strings || f.kind == Kind::counts) opt->delimiter(',')->expected(1, -1);
    else opt->expected(1);
    so.opts[f.key] = opt;
  }
}

inline Attribute parse_attribute_flag(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw InvalidArgument("--attribute expects name=v1,v2: '" + s + "'");
  return {s.substr(0, eq), text::split(s.substr(eq + 1), ',')};
}

inline double number_arg(const std::string& flag, const std::string& v) {
  auto d = text::parse_double(v);
  if (!d) throw InvalidArgument(flag + ": '" + v + "' is not a number");
  return *d;
}

inline std::size_t count_arg(const std::string& flag, const std::string& v) {
  auto n = text::parse_size(v);
  if (!n) throw InvalidArgument(flag + ": '" + v + "' is not a non-negative integer");
  return *n;
}

inline MethodSpec build_spec(const SpecOptions& so) {
  json j = json::object();
  if (!so.config.empty()) {
    try {
      j = json::parse(text::read_file(resolve_input_path(so.config)));
    } catch (const json::exception& e) {
      throw ParseError(so.config, 0, e.what());
    }
    if (!j.is_object()) throw InvalidArgument("config " + so.config + " is not a JSON object");
  }
  for (const auto& f : spec_flags()) {
    if (so.opts.at(f.key)->count() == 0) continue;
    const auto& vals = so.raw.at(f.key);
    switch (f.kind) {
      case Kind::string: j[f.key] = vals.front(); break;
      case Kind::number: j[f.key] = number_arg(f.name, vals.front()); break;
      case Kind::count: j[f.key] = count_arg(f.name, vals.front()); break;
      case Kind::strings: j[f.key] = vals; break;
      case Kind::counts: {
        json arr = json::array();
        for (const auto& v : vals) arr.push_back(count_arg(f.name, v));
        j[f.key] = arr;
        break;
      }
    }
  }
  if (!so.attributes.empty()) {
    json arr = json::array();
    for (const auto& a : so.attributes) {
      const auto attr = parse_attribute_flag(a);
      arr.push_back({{"name", attr.name}, {"values", attr.values}});
    }
    j["attributes"] = arr;
  }
  if (!j.contains("method")) throw InvalidArgument("no method given (--method or config key 'method')");
  MethodSpec spec = spec_from_json(j);
  spec.validate();
  return spec;
}

inline std::string file_stem(const std::string& label) {
  std::string out;
  for (char c : label) {
    const auto u = static_cast<unsigned char>(c);
    out.push_back(std::isalnum(u) ? static_cast<char>(std::tolower(u)) : '-');
  }
  return out;
}

inline std::string single_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace detail

/// Entry point for the `fairshot` tool. Errors go to `err` as one JSON line.
inline int cli_main(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Zero- and few-shot debiasing of linear text classifiers"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "train and evaluate one method");
  detail::SpecOptions run_opts;
  std::string out_dir = "results";
  detail::add_spec_options(*run, run_opts);
  run->add_option("--out-dir", out_dir, "directory for report, config, result and loss files");

  // sweep
  auto* sw = app.add_subcommand("sweep", "vary one parameter over repeated runs");
  detail::SpecOptions sweep_opts;
  std::string sweep_param, sweep_out;
  std::vector<double> sweep_values;
  std::size_t repeats = 1;
  detail::add_spec_options(*sw, sweep_opts);
  sw->add_option("--param", sweep_param, "alpha, epsilon_cluster, knn_k, beta or lambda")->required();
  sw->add_option("--values", sweep_values, "comma-separated values")->required()->delimiter(',');
  sw->add_option("--repeats", repeats, "seeds per value");
  sw->add_option("--out", sweep_out, "CSV output path (default: stdout)");

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic corpus and its embeddings");
  SyntheticSpec syn;
  std::uint64_t synth_seed = 1;
  std::string synth_out, synth_emb;
  std::vector<std::string> synth_attrs, synth_names;
  std::optional<double> synth_label_sep;
  synth->add_option("--labels", syn.labels, "number of labels");
  synth->add_option("--label-names", synth_names, "label names")->delimiter(',');
  synth->add_option("--per-cell", syn.per_cell, "instances per (label, combination) cell when unbiased");
  synth->add_option("--separation", syn.separation, "distance between attribute centres");
  synth->add_option("--label-separation", synth_label_sep, "distance between label centres");
  synth->add_option("--sigma", syn.sigma, "isotropic noise");
  synth->add_option("--bias", syn.bias, "skew of biased labels towards one combination");
  synth->add_option("--biased-labels", syn.biased_labels, "label ids to skew")->delimiter(',');
  synth->add_option("--dimension", syn.dimension, "embedding dimension");
  synth->add_option("--attribute", synth_attrs, "attribute as name=v1,v2 (repeatable)")->take_all();
  synth->add_option("--token-prefix", syn.token_prefix, "sentence token prefix");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", synth_out, "corpus CSV path")->required();
  synth->add_option("--embeddings-out", synth_emb, "embedding path (default: <out>.vec)");

  // report
  auto* rep = app.add_subcommand("report", "tabulate saved run results");
  std::vector<std::string> report_files;
  std::string report_format = "text", report_out;
  rep->add_option("files", report_files, "result JSON files")->required();
  rep->add_option("--format", report_format, "text or csv")->check(CLI::IsMember({"text", "csv"}));
  rep->add_option("--out", report_out, "output path (default: stdout)");

  std::string command = "fairshot";
  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return 0;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return 0;
    } catch (const CLI::Success&) {
      return 0;
    } catch (const CLI::ParseError& e) {
      for (auto* sub : app.get_subcommands()) command = sub->get_name();
      err << json{{"error", detail::single_line(e.what())}, {"stage", "arguments"}, {"command", command}}.dump() << '\n';
      return 2;
    }
    command = app.get_subcommands().front()->get_name();

    if (*run) {
      const MethodSpec spec = run_stage("config", [&] { return detail::build_spec(run_opts); });
      const RunData data = load_run_data(spec);
      std::vector<SavedReport> summary;
      for (auto seed : spec.seeds) {
        const RunResult r = run_method(spec, data, seed);
        const std::filesystem::path dir(out_dir);
        const std::string stem = detail::file_stem(r.method) + "-seed" + std::to_string(seed);
        run_stage("write", [&] {
          std::ostringstream report, loss;
          write_report_csv(r.method, r.report, report);
          write_loss_trace(r.artifacts.loss_trace, loss);
          text::write_file_atomic(dir / (stem + ".report.csv"), report.str());
          text::write_file_atomic(dir / (stem + ".config.json"), to_json(r.config).dump(2) + "\n");
          text::write_file_atomic(dir / (stem + ".result.json"), result_to_json(r).dump(2) + "\n");
          text::write_file_atomic(dir / (stem + ".loss.csv"), loss.str());
          return 0;
        });
        summary.push_back(saved_report_from_json(result_to_json(r)));
      }
      write_saved_reports_table(summary, out);
    } else if (*sw) {
      const MethodSpec spec = run_stage("config", [&] { return detail::build_spec(sweep_opts); });
      const SweepParam param = run_stage("config", [&] { return parse_sweep_param(sweep_param); });
      // reject inapplicable parameters before loading any data
      run_stage("config", [&] { return with_parameter(spec, param, sweep_values.front()).validate(), 0; });
      const RunData data = load_run_data(spec);
      const auto result = sweep(spec, param, sweep_values, repeats,
                                [&](const MethodSpec& point, std::uint64_t seed) { return run_method(point, data, seed); });
      std::ostringstream csv;
      write_sweep_csv(result, csv);
      if (sweep_out.empty()) out << csv.str();
      else run_stage("write", [&] { return text::write_file_atomic(sweep_out, csv.str()), 0; });
    } else if (*synth) {
      Corpus corpus = run_stage("synth", [&] {
        if (!synth_attrs.empty()) {
          std::vector<Attribute> attrs;
          for (const auto& a : synth_attrs) attrs.push_back(detail::parse_attribute_flag(a));
          syn.schema = AttributeSchema(attrs);
        }
        syn.label_separation = synth_label_sep;
        syn.label_names = synth_names;
        return make_synthetic(syn, synth_seed);
      });
      if (synth_emb.empty()) synth_emb = synth_out + ".vec";
      run_stage("write", [&] {
        std::ostringstream csv, vec;
        write_corpus(corpus, csv);
        write_embeddings(embeddings_from_corpus(corpus), vec);
        text::write_file_atomic(synth_out, csv.str());
        text::write_file_atomic(synth_emb, vec.str());
        return 0;
      });
      out << "wrote " << corpus.size() << " instances to " << synth_out << " and " << synth_emb << '\n';
    } else if (*rep) {
      std::vector<SavedReport> reports;
      for (const auto& f : report_files)
        reports.push_back(run_stage("report", [&] {
          try {
            return saved_report_from_json(json::parse(text::read_file(f)));
          } catch (const json::exception& e) {
            throw ParseError(f, 0, e.what());
          }
        }));
      std::ostringstream buf;
      if (report_format == "csv") write_saved_reports_csv(reports, buf);
      else write_saved_reports_table(reports, buf);
      if (report_out.empty()) out << buf.str();
      else run_stage("write", [&] { return text::write_file_atomic(report_out, buf.str()), 0; });
    }
    return 0;
  } catch (const StageError& e) {
    err << json{{"error", detail::single_line(e.what())}, {"stage", e.stage()}, {"command", command}}.dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << json{{"error", detail::single_line(e.what())}, {"command", command}}.dump() << '\n';
    return 1;
  }
}

}  // namespace fairshot::cli

#endif  // FAIRSHOT_CLI_HPP
