#include "xmodal/cli.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "xmodal/cmmp.hpp"
#include "xmodal/csc.hpp"
#include "xmodal/dataset.hpp"
#include "xmodal/eval.hpp"

namespace xmodal {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// Option sets

struct SynthOptions {
  SynthConfig cfg;
  std::uint64_t seed = 0;
  std::string out;
};

struct ClusterOptions {
  std::vector<std::string> modalities;
  std::string labels;
  bool header = false;
  std::string method = "csc";
  double lambda1 = 0.1;
  double lambda3 = 1.0;
  std::vector<double> weights;
  int clusters = 0;
  Index per_class = 0;
  int runs = 1;
  int max_iters = 100;
  double tol = 1e-6;
  Index knn = 0;
  bool no_normalize = false;
  std::vector<double> sweep_lambda1;
  std::vector<double> sweep_lambda3;
  bool export_graph = false;
  std::uint64_t seed = 0;
  std::string out;
};

struct TrainParams {
  double lambda1 = 0.1;
  double lambda2 = 0.1;
  double epsilon = 1e-8;
  int max_iters = 100;
  double tol = 1e-7;
  double residual_tol = 1e-6;
  std::string pair_penalty = "l21";
  std::string graph = "unsupervised";
  double csc_lambda1 = 0.1;
  double csc_lambda3 = 1.0;
  Index per_class = 0;
  bool no_normalize = false;
};

struct TrainOptions {
  std::vector<std::string> modalities;
  std::string labels;
  bool header = false;
  TrainParams params;
  std::uint64_t seed = 0;
  std::string out;
};

struct RetrieveOptions {
  std::string model;
  std::vector<std::string> modalities;
  std::string labels;
  bool header = false;
  std::vector<std::string> metrics = {"l2"};
  Index k = 10;
  std::vector<double> sweep_lambda2;
  std::vector<std::string> train_modalities;
  std::string train_labels;
  TrainParams params;
  std::uint64_t seed = 0;
  std::string out;
};

// ---------------------------------------------------------------------------
// Small I/O helpers

void ensure_dir(const std::string& dir) {
  if (dir.empty()) throw Error(ErrorKind::Usage, "--out is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create output directory '" + dir + "': " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

using KeyValues = std::vector<std::pair<std::string, std::string>>;

void write_key_values(const fs::path& path, const KeyValues& kv) {
  std::string text;
  for (const auto& [k, v] : kv) text += k + "=" + v + "\n";
  write_text(path, text);
}

std::map<std::string, std::string> read_key_values(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::MalformedInput, path.string() + ": expected key=value");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::string join(const std::vector<double>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ',';
    s += format_double(values[i]);
  }
  return s;
}

// Effective configuration of one subcommand in the INI dialect `--config`
// reads back; the output directory is left out so re-runs elsewhere match.
std::string effective_config(const CLI::App& sub) {
  std::istringstream body(sub.config_to_str(true, false));
  std::string text = "[" + sub.get_name() + "]\n";
  std::string line;
  while (std::getline(body, line)) {
    if (line.rfind("out=", 0) == 0) continue;
    if (line.size() >= 3 && line.compare(line.size() - 3, 3, "=\"\"") == 0) continue;  // empty list
    text += line + "\n";
  }
  return text;
}

PairedDataset load_dataset(const std::vector<std::string>& paths, const std::string& labels, bool header) {
  PairedDataset ds;
  for (const auto& p : paths) {
    ds.modalities.push_back(load_modality_csv(p, header));
    ds.names.push_back(fs::path(p).filename().string());
  }
  if (!labels.empty()) ds.labels = load_labels_csv(labels, header);
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// synth

json synth_config_json(const SynthOptions& o) {
  json j;
  j["seed"] = o.seed;
  j["clusters"] = o.cfg.clusters;
  j["points_per_cluster"] = o.cfg.points_per_cluster;
  j["dims"] = o.cfg.ambient_dims;
  j["subspace_dim"] = o.cfg.subspace_dim;
  j["noise"] = o.cfg.noise_sigma;
  j["outliers"] = o.cfg.outlier_pair_fraction;
  j["center_scale"] = o.cfg.center_scale;
  j["test_points_per_cluster"] = o.cfg.test_points_per_cluster;
  return j;
}

void run_synth(const SynthOptions& o, const CLI::App& sub, std::ostream& out) {
  ensure_dir(o.out);
  const fs::path dir(o.out);
  const SyntheticData data = generate_synthetic_paired(o.cfg, o.seed);
  for (std::size_t m = 0; m < data.train.modalities.size(); ++m) {
    write_modality_csv(dir / ("modality_" + std::to_string(m + 1) + ".csv"), data.train.modalities[m]);
  }
  write_labels_csv(dir / "labels.csv", *data.train.labels);
  std::string corrupted;
  for (Index i : data.corrupted) corrupted += std::to_string(i + 1) + "\n";
  write_text(dir / "corrupted.csv", corrupted);
  if (data.test.num_modalities() > 0) {
    for (std::size_t m = 0; m < data.test.modalities.size(); ++m) {
      write_modality_csv(dir / ("test_modality_" + std::to_string(m + 1) + ".csv"), data.test.modalities[m]);
    }
    write_labels_csv(dir / "test_labels.csv", *data.test.labels);
  }

  KeyValues meta;
  const json cfg = synth_config_json(o);
  for (const auto& [k, v] : cfg.items()) {
    meta.emplace_back(k, v.is_array() ? [&] {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i].dump();
      return s;
    }() : v.dump());
  }
  meta.emplace_back("samples", std::to_string(data.train.size()));
  meta.emplace_back("test_samples", std::to_string(data.test.size()));
  meta.emplace_back("corrupted_pairs", std::to_string(data.corrupted.size()));
  write_key_values(dir / "meta.txt", meta);
  EvalReport report;
  report.config = cfg;
  report.extra["samples"] = data.train.size();
  report.extra["test_samples"] = data.test.size();
  report.extra["corrupted_pairs"] = data.corrupted.size();
  write_json(dir / "report.json", report.to_json());
  write_text(dir / "config.ini", effective_config(sub));
  out << "wrote " << data.train.size() << " paired samples to " << o.out << "\n";
}

// ---------------------------------------------------------------------------
// cluster

struct ClusterRun {
  double accuracy = 0.0;
  double nmi = 0.0;
  int iterations = 0;
  std::vector<int> pred;
  Matrix z;
};

ClusterRun cluster_once(const PairedDataset& ds, const std::string& method, const CscParams& params,
                        Index modality, int c, std::uint64_t seed) {
  ClusterRun run;
  if (method == "csc") {
    const CscState state = csc_fit(ds, params);
    run.z = state.z;
    run.iterations = state.iterations;
  } else if (method == "lsr_concat") {
    run.z = lsr_concat_baseline(ds, params.lambda1, params);
  } else {
    run.z = lsr_representation(ds.modalities[static_cast<std::size_t>(modality)], params.lambda1);
  }
  run.pred = spectral_cluster(affinity_from_representation(run.z), c, seed);
  run.accuracy = clustering_accuracy(run.pred, *ds.labels);
  run.nmi = xmodal::nmi(run.pred, *ds.labels);
  return run;
}

struct CellResult {
  double lambda1 = 0.0;
  double lambda3 = 0.0;
  MeanStd accuracy;
  MeanStd nmi;
  std::string selected_modality;
  json runs = json::array();
  ClusterRun first;
};

CellResult cluster_cell(const ClusterOptions& o, const PairedDataset& full, double lambda1, double lambda3) {
  CscParams params;
  params.lambda1 = lambda1;
  params.lambda3 = lambda3;
  params.modality_weights = o.weights;
  params.max_outer_iters = o.max_iters;
  params.tol = o.tol;
  if (o.knn > 0) params.knn_restrict = o.knn;

  const int c = o.clusters > 0 ? o.clusters : full.num_classes();
  const Index m = o.method == "lsr_single" ? full.num_modalities() : 1;
  // acc/nmi per candidate modality (one candidate unless lsr_single)
  std::vector<std::vector<double>> accs(static_cast<std::size_t>(m)), nmis(static_cast<std::size_t>(m));
  std::vector<json> run_rows(static_cast<std::size_t>(m), json::array());
  CellResult cell;
  cell.lambda1 = lambda1;
  cell.lambda3 = lambda3;

  for (int r = 0; r < o.runs; ++r) {
    const std::uint64_t seed = o.seed + static_cast<std::uint64_t>(r);
    PairedDataset ds = o.per_class > 0 ? stratified_subsample(full, o.per_class, seed) : full;
    if (!o.no_normalize) ds = unit_normalize(ds);
    for (Index v = 0; v < m; ++v) {
      ClusterRun run = cluster_once(ds, o.method, params, v, c, seed);
      accs[static_cast<std::size_t>(v)].push_back(run.accuracy);
      nmis[static_cast<std::size_t>(v)].push_back(run.nmi);
      json row;
      row["run"] = r;
      row["seed"] = seed;
      row["accuracy"] = run.accuracy;
      row["nmi"] = run.nmi;
      row["iterations"] = run.iterations;
      run_rows[static_cast<std::size_t>(v)].push_back(row);
      if (r == 0 && v == 0) cell.first = std::move(run);
    }
  }

  std::size_t best = 0;
  for (std::size_t v = 0; v < accs.size(); ++v) {
    if (mean_std(accs[v]).mean > mean_std(accs[best]).mean) best = v;
  }
  cell.accuracy = mean_std(accs[best]);
  cell.nmi = mean_std(nmis[best]);
  cell.runs = run_rows[best];
  if (o.method == "lsr_single") cell.selected_modality = full.names[best];
  return cell;
}

json cluster_config_json(const ClusterOptions& o) {
  json j;
  j["seed"] = o.seed;
  j["modality"] = o.modalities;
  j["labels"] = o.labels;
  j["header"] = o.header;
  j["method"] = o.method;
  j["lambda1"] = o.lambda1;
  j["lambda3"] = o.lambda3;
  j["weights"] = o.weights;
  j["clusters"] = o.clusters;
  j["per_class"] = o.per_class;
  j["runs"] = o.runs;
  j["max_iters"] = o.max_iters;
  j["tol"] = o.tol;
  j["knn"] = o.knn;
  j["normalize"] = !o.no_normalize;
  j["sweep_lambda1"] = o.sweep_lambda1;
  j["sweep_lambda3"] = o.sweep_lambda3;
  return j;
}

void run_cluster(const ClusterOptions& o, const CLI::App& sub, std::ostream& out) {
  if (o.labels.empty()) throw Error(ErrorKind::Usage, "cluster: --labels is required for evaluation");
  if (o.method != "csc" && o.method != "lsr_concat" && o.method != "lsr_single") {
    throw Error(ErrorKind::Usage, "cluster: unknown method '" + o.method + "'");
  }
  if (o.runs < 1) throw Error(ErrorKind::Usage, "cluster: --runs must be >= 1");
  ensure_dir(o.out);
  const fs::path dir(o.out);
  const PairedDataset full = load_dataset(o.modalities, o.labels, o.header);

  const bool sweep = !o.sweep_lambda1.empty() || !o.sweep_lambda3.empty();
  const std::vector<double> grid1 = o.sweep_lambda1.empty() ? std::vector<double>{o.lambda1} : o.sweep_lambda1;
  const std::vector<double> grid3 = o.sweep_lambda3.empty() ? std::vector<double>{o.lambda3} : o.sweep_lambda3;

  std::vector<CellResult> cells;
  for (double l1 : grid1)
    for (double l3 : grid3) cells.push_back(cluster_cell(o, full, l1, l3));

  std::size_t best = 0;
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (cells[i].accuracy.mean > cells[best].accuracy.mean) best = i;
  const CellResult& head = sweep ? cells[best] : cells.front();

  EvalReport report;
  report.accuracy = head.accuracy.mean;
  report.nmi = head.nmi.mean;
  report.config = cluster_config_json(o);
  report.extra["method"] = o.method;
  report.extra["accuracy_std"] = head.accuracy.std;
  report.extra["nmi_std"] = head.nmi.std;
  report.extra["lambda1"] = head.lambda1;
  report.extra["lambda3"] = head.lambda3;
  if (!head.selected_modality.empty()) report.extra["selected_modality"] = head.selected_modality;
  report.extra["runs"] = head.runs;

  std::string csv = "method,lambda1,lambda3,accuracy_mean,accuracy_std,nmi_mean,nmi_std\n";
  json sweep_rows = json::array();
  for (const auto& cell : cells) {
    csv += o.method + "," + format_double(cell.lambda1) + "," + format_double(cell.lambda3) + "," +
           format_double(cell.accuracy.mean) + "," + format_double(cell.accuracy.std) + "," +
           format_double(cell.nmi.mean) + "," + format_double(cell.nmi.std) + "\n";
    json row;
    row["lambda1"] = cell.lambda1;
    row["lambda3"] = cell.lambda3;
    row["accuracy_mean"] = cell.accuracy.mean;
    row["accuracy_std"] = cell.accuracy.std;
    row["nmi_mean"] = cell.nmi.mean;
    row["nmi_std"] = cell.nmi.std;
    sweep_rows.push_back(row);
  }
  if (sweep) {
    report.extra["sweep"] = sweep_rows;
    write_text(dir / "sweep.csv", csv);
  }
  write_text(dir / "report.csv", csv);
  write_json(dir / "report.json", report.to_json());
  write_text(dir / "config.ini", effective_config(sub));
  if (o.export_graph) {
    write_matrix_csv(dir / "Z.csv", head.first.z);
    write_matrix_csv(dir / "A.csv", affinity_from_representation(head.first.z));
    write_labels_csv(dir / "pred_labels.csv", head.first.pred);
  }
  out << "accuracy " << format_double(head.accuracy.mean) << " +- " << format_double(head.accuracy.std)
      << ", nmi " << format_double(head.nmi.mean) << " +- " << format_double(head.nmi.std) << "\n";
}

// ---------------------------------------------------------------------------
// train

CmmpParams to_cmmp_params(const TrainParams& p) {
  CmmpParams c;
  c.lambda1 = p.lambda1;
  c.lambda2 = p.lambda2;
  c.epsilon = p.epsilon;
  c.max_iters = p.max_iters;
  c.tol = p.tol;
  c.residual_tol = p.residual_tol;
  if (p.pair_penalty == "l21") {
    c.pair_penalty = PairPenalty::L21;
  } else if (p.pair_penalty == "l2") {
    c.pair_penalty = PairPenalty::SquaredFrobenius;
  } else {
    throw Error(ErrorKind::Usage, "unknown pair penalty '" + p.pair_penalty + "' (l21 or l2)");
  }
  if (p.graph == "unsupervised") {
    c.graph_mode = GraphMode::Unsupervised;
  } else if (p.graph == "supervised") {
    c.graph_mode = GraphMode::Supervised;
  } else {
    throw Error(ErrorKind::Usage, "unknown graph mode '" + p.graph + "'");
  }
  c.normalize = !p.no_normalize;
  return c;
}

CscParams graph_csc_params(const TrainParams& p) {
  CscParams g;
  g.lambda1 = p.csc_lambda1;
  g.lambda3 = p.csc_lambda3;
  return g;
}

json train_params_json(const TrainParams& p) {
  json j;
  j["lambda1"] = p.lambda1;
  j["lambda2"] = p.lambda2;
  j["epsilon"] = p.epsilon;
  j["max_iters"] = p.max_iters;
  j["tol"] = p.tol;
  j["residual_tol"] = p.residual_tol;
  j["pair_penalty"] = p.pair_penalty;
  j["graph"] = p.graph;
  j["csc_lambda1"] = p.csc_lambda1;
  j["csc_lambda3"] = p.csc_lambda3;
  j["per_class"] = p.per_class;
  j["normalize"] = !p.no_normalize;
  return j;
}

PairedDataset training_set(const std::vector<std::string>& modalities, const std::string& labels,
                           bool header, const TrainParams& p, std::uint64_t seed) {
  if (modalities.size() != 2) throw Error(ErrorKind::Usage, "exactly two --modality files are required");
  if (labels.empty()) throw Error(ErrorKind::Usage, "training requires --labels");
  PairedDataset ds = load_dataset(modalities, labels, header);
  if (p.per_class > 0) ds = stratified_subsample(ds, p.per_class, seed);
  return ds;
}

void run_train(const TrainOptions& o, const CLI::App& sub, std::ostream& out) {
  if (o.labels.empty()) throw Error(ErrorKind::Usage, "train: --labels is required");
  const CmmpParams params = to_cmmp_params(o.params);
  ensure_dir(o.out);
  const fs::path dir(o.out);
  const PairedDataset ds = training_set(o.modalities, o.labels, o.header, o.params, o.seed);
  const CmmpModel model = cmmp_fit(ds, params, graph_csc_params(o.params));
  const CmmpFit& fit = model.fit;

  write_matrix_csv(dir / "U_A.csv", fit.projections.u_a);
  write_matrix_csv(dir / "U_B.csv", fit.projections.u_b);
  KeyValues meta = {
      {"lambda1", format_double(params.lambda1)},
      {"lambda2", format_double(params.lambda2)},
      {"epsilon", format_double(params.epsilon)},
      {"pair_penalty", o.params.pair_penalty},
      {"graph", o.params.graph},
      {"normalize", params.normalize ? "1" : "0"},
      {"classes", std::to_string(model.classes)},
      {"samples", std::to_string(ds.size())},
      {"seed", std::to_string(o.seed)},
      {"iterations", std::to_string(fit.iterations)},
      {"converged", fit.converged ? "1" : "0"},
      {"ridge_added", fit.ridge_added ? "1" : "0"},
      {"final_objective", format_double(fit.objective_trace.back())},
      {"stationarity_residual", format_double(fit.stationarity)},
      {"objective_trace", join(fit.objective_trace)},
      {"smoothed_trace", join(fit.smoothed_trace)},
  };
  write_key_values(dir / "model.meta", meta);

  EvalReport report;
  json cfg = train_params_json(o.params);
  cfg["seed"] = o.seed;
  cfg["modality"] = o.modalities;
  cfg["labels"] = o.labels;
  cfg["header"] = o.header;
  report.config = cfg;
  report.extra["iterations"] = fit.iterations;
  report.extra["converged"] = fit.converged;
  report.extra["ridge_added"] = fit.ridge_added;
  report.extra["final_objective"] = fit.objective_trace.back();
  report.extra["stationarity_residual"] = fit.stationarity;
  report.extra["objective_trace"] = fit.objective_trace;
  report.extra["smoothed_trace"] = fit.smoothed_trace;
  write_json(dir / "report.json", report.to_json());
  write_text(dir / "config.ini", effective_config(sub));
  out << "trained in " << fit.iterations << " iterations, objective "
      << format_double(fit.objective_trace.back()) << ", stationarity residual "
      << format_double(fit.stationarity) << "\n";
}

// ---------------------------------------------------------------------------
// retrieve

struct TestSet {
  Matrix x_a;
  Matrix x_b;
  std::vector<int> labels;
};

// One report row: both query directions under one metric. Modality A plays
// the text side, modality B the image side.
json evaluate_metric(const ProjectionPair& proj, const TestSet& test, DistanceMetric metric, Index k,
                     std::vector<double>* text_ap) {
  json row;
  row["metric"] = std::string(to_string(metric));
  try {
    const auto text_rank = cross_modal_retrieve(proj, test.x_a, test.labels, test.x_b, test.labels,
                                                QuerySide::A, metric);
    const auto image_rank = cross_modal_retrieve(proj, test.x_b, test.labels, test.x_a, test.labels,
                                                 QuerySide::B, metric);
    const MapResult text_map = mean_average_precision(text_rank);
    const MapResult image_map = mean_average_precision(image_rank);
    const Matrix emb_a = project(proj.u_a, test.x_a);
    const Matrix emb_b = project(proj.u_b, test.x_b);
    const double rate_text = knn_recognition_rate(emb_b, test.labels, emb_a, test.labels, k, metric);
    const double rate_image = knn_recognition_rate(emb_a, test.labels, emb_b, test.labels, k, metric);
    Index paired_first = 0;
    for (const auto& r : text_rank)
      if (r.ranked_gallery.front() == r.query_index) ++paired_first;

    row["map_text_query"] = text_map.map;
    row["map_image_query"] = image_map.map;
    row["map_average"] = 0.5 * (text_map.map + image_map.map);
    row["recognition_rate_text_query"] = rate_text;
    row["recognition_rate_image_query"] = rate_image;
    row["pair_top1_rate"] = static_cast<double>(paired_first) / static_cast<double>(text_rank.size());
    row["skipped_text_queries"] = text_map.skipped_queries.size();
    row["skipped_image_queries"] = image_map.skipped_queries.size();
    row["error"] = nullptr;
    if (text_ap) *text_ap = text_map.per_query_ap;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::InvalidForMetric) throw;
    for (const char* key : {"map_text_query", "map_image_query", "map_average", "recognition_rate_text_query",
                            "recognition_rate_image_query", "pair_top1_rate"}) {
      row[key] = nullptr;
    }
    row["error"] = std::string(to_string(e.kind()));
  }
  return row;
}

std::vector<DistanceMetric> resolve_metrics(const std::vector<std::string>& names) {
  std::vector<DistanceMetric> out;
  for (const auto& n : names) {
    if (n == "all") {
      for (auto m : {DistanceMetric::L1, DistanceMetric::L2, DistanceMetric::Cosine, DistanceMetric::ChiSquare})
        out.push_back(m);
    } else {
      out.push_back(parse_metric(n));
    }
  }
  if (out.empty()) throw Error(ErrorKind::Usage, "retrieve: at least one --metric is required");
  return out;
}

TestSet load_test_set(const RetrieveOptions& o, bool normalize) {
  if (o.modalities.size() != 2) throw Error(ErrorKind::Usage, "retrieve: exactly two --modality files are required");
  if (o.labels.empty()) throw Error(ErrorKind::Usage, "retrieve: --labels is required");
  PairedDataset ds = load_dataset(o.modalities, o.labels, o.header);
  if (normalize) ds = unit_normalize(ds);
  return {ds.modalities[0], ds.modalities[1], *ds.labels};
}

json retrieve_config_json(const RetrieveOptions& o) {
  json j;
  j["seed"] = o.seed;
  j["model"] = o.model;
  j["modality"] = o.modalities;
  j["labels"] = o.labels;
  j["header"] = o.header;
  j["metric"] = o.metrics;
  j["k"] = o.k;
  j["map_average_over"] = "queries";
  if (!o.sweep_lambda2.empty()) {
    j["sweep_lambda2"] = o.sweep_lambda2;
    j["train_modality"] = o.train_modalities;
    j["train_labels"] = o.train_labels;
    j["train"] = train_params_json(o.params);
  }
  return j;
}

void run_retrieve(const RetrieveOptions& o, const CLI::App& sub, std::ostream& out) {
  const auto metrics = resolve_metrics(o.metrics);
  ensure_dir(o.out);
  const fs::path dir(o.out);
  EvalReport report;
  report.config = retrieve_config_json(o);

  if (!o.sweep_lambda2.empty()) {
    // Accuracy-vs-λ2 curves for the ℓ21 and squared pair penalties.
    const PairedDataset train = training_set(o.train_modalities, o.train_labels, o.header, o.params, o.seed);
    const TestSet test = load_test_set(o, !o.params.no_normalize);
    std::string csv = "pair_penalty,lambda2,recognition_rate,map_text_query,map_image_query,map_average\n";
    json rows = json::array();
    for (const char* penalty : {"l21", "l2"}) {
      for (double l2 : o.sweep_lambda2) {
        TrainParams p = o.params;
        p.pair_penalty = penalty;
        p.lambda2 = l2;
        const CmmpModel model = cmmp_fit(train, to_cmmp_params(p), graph_csc_params(p));
        const json r = evaluate_metric(model.fit.projections, test, metrics.front(), o.k, nullptr);
        json row;
        row["pair_penalty"] = penalty;
        row["lambda2"] = l2;
        row["recognition_rate"] = r["recognition_rate_text_query"];
        row["map_text_query"] = r["map_text_query"];
        row["map_image_query"] = r["map_image_query"];
        row["map_average"] = r["map_average"];
        rows.push_back(row);
        auto cell = [](const json& v) { return v.is_null() ? std::string() : format_double(v.get<double>()); };
        csv += std::string(penalty) + "," + format_double(l2) + "," + cell(row["recognition_rate"]) + "," +
               cell(row["map_text_query"]) + "," + cell(row["map_image_query"]) + "," +
               cell(row["map_average"]) + "\n";
      }
    }
    report.extra["sweep"] = rows;
    write_text(dir / "sweep.csv", csv);
    write_json(dir / "report.json", report.to_json());
    write_text(dir / "config.ini", effective_config(sub));
    out << "wrote " << rows.size() << " sweep rows to " << (dir / "sweep.csv").string() << "\n";
    return;
  }

  if (o.model.empty()) throw Error(ErrorKind::Usage, "retrieve: --model is required");
  const fs::path model_dir(o.model);
  const auto meta = read_key_values(model_dir / "model.meta");
  const bool normalize = meta.count("normalize") ? meta.at("normalize") == "1" : true;
  ProjectionPair proj{load_matrix_csv(model_dir / "U_A.csv"), load_matrix_csv(model_dir / "U_B.csv")};
  const TestSet test = load_test_set(o, normalize);

  json rows = json::array();
  std::string csv =
      "metric,map_text_query,map_image_query,map_average,recognition_rate_text_query,"
      "recognition_rate_image_query,pair_top1_rate,error\n";
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    std::vector<double> text_ap;
    json row = evaluate_metric(proj, test, metrics[i], o.k, &text_ap);
    if (i == 0 && row["error"].is_null()) {
      report.map = row["map_average"].get<double>();
      report.recognition_rate = row["recognition_rate_text_query"].get<double>();
      report.per_query_ap = text_ap;
    }
    auto cell = [&](const char* key) {
      return row[key].is_null() ? std::string() : format_double(row[key].get<double>());
    };
    csv += row["metric"].get<std::string>() + "," + cell("map_text_query") + "," + cell("map_image_query") + "," +
           cell("map_average") + "," + cell("recognition_rate_text_query") + "," +
           cell("recognition_rate_image_query") + "," + cell("pair_top1_rate") + "," +
           (row["error"].is_null() ? std::string() : row["error"].get<std::string>()) + "\n";
    rows.push_back(std::move(row));
  }
  report.extra["results"] = rows;
  write_text(dir / "report.csv", csv);
  write_json(dir / "report.json", report.to_json());
  write_text(dir / "config.ini", effective_config(sub));
  for (const auto& row : rows) {
    out << row["metric"].get<std::string>() << ": ";
    if (row["error"].is_null()) {
      out << "MAP " << format_double(row["map_average"].get<double>()) << ", recognition rate "
          << format_double(row["recognition_rate_text_query"].get<double>()) << "\n";
    } else {
      out << row["error"].get<std::string>() << "\n";
    }
  }
}

void add_shared(CLI::App* sub, std::uint64_t& seed, std::string& out_dir) {
  sub->add_option("--seed", seed, "Random seed recorded in every report")->capture_default_str();
  sub->add_option("--out", out_dir, "Output directory")->required();
}

void add_train_params(CLI::App* sub, TrainParams& p) {
  sub->add_option("--lambda1", p.lambda1, "Graph (structure) term weight")->capture_default_str();
  sub->add_option("--lambda2", p.lambda2, "Pair term weight")->capture_default_str();
  sub->add_option("--epsilon", p.epsilon, "Reweighting floor")->capture_default_str();
  sub->add_option("--max-iters", p.max_iters)->capture_default_str();
  sub->add_option("--tol", p.tol, "Relative objective change threshold")->capture_default_str();
  sub->add_option("--residual-tol", p.residual_tol, "Stationarity residual required to stop early (0 = off)")
      ->capture_default_str();
  sub->add_option("--pair-penalty", p.pair_penalty, "l21 or l2 (squared)")->capture_default_str();
  sub->add_option("--graph", p.graph, "unsupervised (CSC affinity) or supervised (same label)")
      ->capture_default_str();
  sub->add_option("--csc-lambda1", p.csc_lambda1)->capture_default_str();
  sub->add_option("--csc-lambda3", p.csc_lambda3)->capture_default_str();
  sub->add_option("--per-class", p.per_class, "Training samples drawn per class (0 = all)")->capture_default_str();
  sub->add_flag("--no-normalize", p.no_normalize, "Skip unit-norm sample normalization");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pairwise-constrained cross-modal clustering and matching"};
  app.name("xmodal");
  app.set_config("--config", "", "INI/TOML configuration file; command-line flags take precedence");
  app.require_subcommand(1);
  app.fallthrough();

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic paired dataset");
  synth_cmd->add_option("--clusters", synth.cfg.clusters)->capture_default_str();
  synth_cmd->add_option("--points-per-cluster", synth.cfg.points_per_cluster)->capture_default_str();
  synth_cmd->add_option("--dims", synth.cfg.ambient_dims, "Ambient dimension per modality (default 20 30)");
  synth_cmd->add_option("--subspace-dim", synth.cfg.subspace_dim)->capture_default_str();
  synth_cmd->add_option("--noise", synth.cfg.noise_sigma)->capture_default_str();
  synth_cmd->add_option("--outliers", synth.cfg.outlier_pair_fraction, "Fraction of corrupted pairs")
      ->capture_default_str();
  synth_cmd->add_option("--center-scale", synth.cfg.center_scale)->capture_default_str();
  synth_cmd->add_option("--test-points-per-cluster", synth.cfg.test_points_per_cluster)->capture_default_str();
  add_shared(synth_cmd, synth.seed, synth.out);

  ClusterOptions cluster;
  auto* cluster_cmd = app.add_subcommand("cluster", "Cross-modal subspace clustering");
  cluster_cmd->add_option("--modality", cluster.modalities, "Feature CSV, one per modality")->required();
  cluster_cmd->add_option("--labels", cluster.labels, "Ground-truth label CSV");
  cluster_cmd->add_flag("--header", cluster.header, "Skip the first line of every CSV");
  cluster_cmd->add_option("--method", cluster.method, "csc, lsr_concat or lsr_single")->capture_default_str();
  cluster_cmd->add_option("--lambda1", cluster.lambda1)->capture_default_str();
  cluster_cmd->add_option("--lambda3", cluster.lambda3)->capture_default_str();
  cluster_cmd->add_option("--weights", cluster.weights, "Modality weights (default 1/m)");
  cluster_cmd->add_option("--clusters", cluster.clusters, "Cluster count (0 = number of classes)")
      ->capture_default_str();
  cluster_cmd->add_option("--per-class", cluster.per_class, "Samples drawn per class each run (0 = all)")
      ->capture_default_str();
  cluster_cmd->add_option("--runs", cluster.runs)->capture_default_str();
  cluster_cmd->add_option("--max-iters", cluster.max_iters)->capture_default_str();
  cluster_cmd->add_option("--tol", cluster.tol)->capture_default_str();
  cluster_cmd->add_option("--knn", cluster.knn, "Restrict each column to k nearest samples (0 = off)")
      ->capture_default_str();
  cluster_cmd->add_flag("--no-normalize", cluster.no_normalize);
  cluster_cmd->add_option("--sweep-lambda1", cluster.sweep_lambda1);
  cluster_cmd->add_option("--sweep-lambda3", cluster.sweep_lambda3);
  cluster_cmd->add_flag("--export-graph", cluster.export_graph, "Write Z, A and predicted labels");
  add_shared(cluster_cmd, cluster.seed, cluster.out);

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train the cross-modal matching projections");
  train_cmd->add_option("--modality", train.modalities, "Modality A then modality B feature CSV")->required();
  train_cmd->add_option("--labels", train.labels, "Training label CSV");
  train_cmd->add_flag("--header", train.header);
  add_train_params(train_cmd, train.params);
  add_shared(train_cmd, train.seed, train.out);

  RetrieveOptions retrieve;
  auto* retrieve_cmd = app.add_subcommand("retrieve", "Evaluate cross-modal retrieval");
  retrieve_cmd->add_option("--model", retrieve.model, "Directory written by train");
  retrieve_cmd->add_option("--modality", retrieve.modalities, "Test modality A then B")->required();
  retrieve_cmd->add_option("--labels", retrieve.labels, "Test label CSV");
  retrieve_cmd->add_flag("--header", retrieve.header);
  retrieve_cmd->add_option("--metric", retrieve.metrics, "l1, l2, cosine, chisq or all")->capture_default_str();
  retrieve_cmd->add_option("--k", retrieve.k, "Neighbors of the KNN classifier")->capture_default_str();
  retrieve_cmd->add_option("--sweep-lambda2", retrieve.sweep_lambda2, "Train and evaluate per lambda2");
  retrieve_cmd->add_option("--train-modality", retrieve.train_modalities);
  retrieve_cmd->add_option("--train-labels", retrieve.train_labels);
  add_train_params(retrieve_cmd, retrieve.params);
  add_shared(retrieve_cmd, retrieve.seed, retrieve.out);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: Usage: " << e.what() << "\n";
    return 2;
  }

  try {
    if (synth_cmd->parsed()) {
      run_synth(synth, *synth_cmd, out);
    } else if (cluster_cmd->parsed()) {
      run_cluster(cluster, *cluster_cmd, out);
    } else if (train_cmd->parsed()) {
      run_train(train, *train_cmd, out);
    } else if (retrieve_cmd->parsed()) {
      run_retrieve(retrieve, *retrieve_cmd, out);
    }
  } catch (const Error& e) {
    std::string msg = e.what();
    for (auto& ch : msg)
      if (ch == '\n') ch = ' ';
    err << "error: " << to_string(e.kind()) << ": " << msg << "\n";
    return e.kind() == ErrorKind::Usage ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: Internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace xmodal
