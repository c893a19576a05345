#include "apl/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "apl/error.hpp"
#include "apl/lungmask.hpp"
#include "apl/nifti.hpp"
#include "apl/phantom.hpp"
#include "apl/sampling.hpp"
#include "apl/scoring.hpp"
#include "apl/service.hpp"
#include "apl/stats.hpp"

namespace apl::cli {
namespace {

namespace fs = std::filesystem;

struct SegmentArgs {
  std::string image;
  std::string out;
};

struct SampleArgs {
  std::string mask;
  std::int64_t k = kDefaultSliceCount;
};

struct ScoreArgs {
  std::string mask;
  std::string ann;
  std::string mode = "pixel";
  std::int64_t k = kDefaultSliceCount;
  std::optional<std::int64_t> cell_edge;
  double tau = kDefaultLungCellThreshold;
  bool no_clip = false;
  std::string subject;
  bool json = false;
  bool no_header = false;
};

struct DiceArgs {
  std::string a;
  std::string b;
  std::optional<int> label;
};

struct EvaluateArgs {
  std::vector<std::string> pred;
  std::vector<std::string> gt;
  std::string out;
};

struct CompareArgs {
  std::string a;
  std::string b;
  std::string column_a = "total_ratio";
  std::string column_b = "total_ratio";
  std::vector<std::string> where_a;
  std::vector<std::string> where_b;
  std::string key = "subject_id";
  std::string test = "both";
};

struct PhantomArgs {
  std::string out;
  std::uint64_t seed = 0;
  std::size_t n = 14;
  double noise = 0.0;
  std::string kind = "cohort";
};

struct ServeArgs {
  std::string store = "apl-store";
  std::string host = "127.0.0.1";
  int port = 8080;
};

struct Common {
  std::string side = "lps";
  std::optional<int> binarize;
  int precision = 6;
};

SplitOptions split_options(const Common& c) {
  return {c.side == "ras" ? SideConvention::ras : SideConvention::lps};
}

std::optional<Label> binarize_threshold(const Common& c) {
  if (!c.binarize) return std::nullopt;
  return static_cast<Label>(*c.binarize);
}

LungMask load_mask(const std::string& path, const Common& c, std::ostream& err) {
  LungMask mask = ingest_mask(nifti::read_labels(path), binarize_threshold(c), split_options(c));
  for (const auto& w : mask.warnings()) err << "warning: " << w << "\n";
  return mask;
}

/// Expands directory arguments into their sorted NIfTI files.
std::vector<fs::path> expand_inputs(const std::vector<std::string>& items) {
  std::vector<fs::path> out;
  for (const auto& item : items) {
    if (!fs::is_directory(item)) {
      out.emplace_back(item);
      continue;
    }
    std::vector<fs::path> found;
    for (const auto& entry : fs::directory_iterator(item)) {
      const std::string name = entry.path().filename().string();
      if (entry.is_regular_file() && (name.ends_with(".nii") || name.ends_with(".nii.gz"))) {
        found.push_back(entry.path());
      }
    }
    std::sort(found.begin(), found.end());
    out.insert(out.end(), found.begin(), found.end());
  }
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name, const std::string& file) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorCode::validation, file + ": no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
};

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path);
  CsvTable t;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (t.header.empty()) {
      t.header = split_fields(line);
      continue;
    }
    auto fields = split_fields(line);
    if (fields.size() != t.header.size()) throw Error(ErrorCode::validation, path + ": ragged row '" + line + "'");
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) throw Error(ErrorCode::validation, path + ": empty CSV");
  return t;
}

double parse_double(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw Error(ErrorCode::validation, where + ": not a number '" + s + "'");
  return v;
}

/// subject -> value, keeping first-seen order; rows failing a "col=value" filter are skipped.
std::vector<std::pair<std::string, double>> keyed_column(const CsvTable& t, const std::string& file,
                                                         const std::string& key, const std::string& column,
                                                         const std::vector<std::string>& where) {
  std::vector<std::pair<std::size_t, std::string>> filters;
  for (const auto& w : where) {
    const auto eq = w.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::validation, "filter must be column=value: " + w);
    filters.emplace_back(t.column(w.substr(0, eq), file), w.substr(eq + 1));
  }
  const std::size_t k = t.column(key, file);
  const std::size_t c = t.column(column, file);
  std::vector<std::pair<std::string, double>> out;
  std::map<std::string, bool> seen;
  for (const auto& row : t.rows) {
    const bool keep = std::all_of(filters.begin(), filters.end(),
                                  [&](const auto& f) { return row[f.first] == f.second; });
    if (!keep) continue;
    if (seen[row[k]]) throw Error(ErrorCode::pairing, file + ": duplicate subject '" + row[k] + "'");
    seen[row[k]] = true;
    out.emplace_back(row[k], parse_double(row[c], file + ":" + row[k]));
  }
  return out;
}

int cmd_segment(const SegmentArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
  const LungMask mask = fallback_segment(nifti::read_image(a.image), split_options(c));
  nifti::write_volume(mask.volume(), a.out);
  for (const auto& w : mask.warnings()) err << "warning: " << w << "\n";
  out << "right_voxels,left_voxels\n" << mask.voxel_counts()[1] << "," << mask.voxel_counts()[2] << "\n";
  return kExitOk;
}

int cmd_sample(const SampleArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
  const SliceSamplePlan plan = sample_slices(lung_extent(load_mask(a.mask, c, err)), a.k);
  if (plan.short_extent) err << "warning: lung extent of " << plan.extent() << " slices is shorter than k\n";
  out << format_slice_list(plan.slices) << "\n";
  return kExitOk;
}

int cmd_score(const ScoreArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
  const LungMask mask = load_mask(a.mask, c, err);
  const SliceSamplePlan plan = sample_slices(lung_extent(mask), a.k);
  const auto annotations = annotations_from_volume(nifti::read_labels(a.ann), plan);
  ScoreReport report;
  if (a.mode == "grid") {
    const GridParams params{a.cell_edge.value_or(default_cell_edge(mask, plan)), a.tau};
    report = grid_score(mask, annotations, plan, params);
  } else {
    report = pixel_score(mask, annotations, plan, !a.no_clip);
  }
  if (a.json) {
    out << to_json(report) << "\n";
    return kExitOk;
  }
  const std::string subject = a.subject.empty() ? fs::path(a.ann).filename().string() : a.subject;
  if (!a.no_header) out << score_csv_header() << "\n";
  out << to_csv_row(report, subject, c.precision) << "\n";
  return kExitOk;
}

int cmd_dice(const DiceArgs& a, const Common& c, std::ostream& out) {
  const LabelSelector sel = a.label ? LabelSelector::of(static_cast<Label>(*a.label)) : LabelSelector::foreground();
  out << format_number(dice_score(nifti::read_labels(a.a), nifti::read_labels(a.b), sel), c.precision) << "\n";
  return kExitOk;
}

int cmd_evaluate(const EvaluateArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
  const DiceTable table = evaluate_masks(expand_inputs(a.pred), expand_inputs(a.gt));
  const std::string csv = to_csv(table, c.precision);
  for (const auto& row : table.rows) {
    if (row.error) err << "warning: " << row.case_id << ": " << *row.error << "\n";
  }
  if (a.out.empty()) {
    out << csv;
  } else {
    std::ofstream f(a.out, std::ios::binary);
    if (!(f << csv)) throw Error(ErrorCode::write, "cannot write " + a.out);
  }
  return table.ok_rows == table.rows.size() ? kExitOk : kExitFailure;
}

int cmd_compare(const CompareArgs& a, const Common& c, std::ostream& out) {
  const std::string b_file = a.b.empty() ? a.a : a.b;
  const CsvTable ta = read_csv(a.a);
  const CsvTable tb = b_file == a.a ? ta : read_csv(b_file);
  const auto va = keyed_column(ta, a.a, a.key, a.column_a, a.where_a);
  const auto vb = keyed_column(tb, b_file, a.key, a.column_b, a.where_b);
  std::map<std::string, double> lookup(vb.begin(), vb.end());
  if (lookup.size() != va.size()) {
    throw Error(ErrorCode::pairing, "inputs cover " + std::to_string(va.size()) + " and " +
                                        std::to_string(lookup.size()) + " subjects");
  }
  std::vector<std::string> labels;
  std::vector<double> xa;
  std::vector<double> xb;
  for (const auto& [subject, value] : va) {
    const auto it = lookup.find(subject);
    if (it == lookup.end()) throw Error(ErrorCode::pairing, "subject '" + subject + "' missing from " + b_file);
    labels.push_back(subject);
    xa.push_back(value);
    xb.push_back(it->second);
  }
  const stats::PairedSample sample(labels, xa, xb);
  out << "test,n,statistic,df,p,effect,stars\n";
  auto emit = [&](const char* name, const stats::TestResult& r) {
    out << name << "," << sample.size() << "," << format_number(r.statistic, c.precision) << ","
        << format_number(r.df, c.precision) << "," << format_number(r.p_two_tailed, c.precision) << ","
        << format_number(r.effect, c.precision) << "," << stats::significance_stars(r.p_two_tailed) << "\n";
  };
  if (a.test == "both" || a.test == "ttest") emit("paired_t", stats::paired_t_test(sample));
  if (a.test == "both" || a.test == "pearson") emit("pearson", stats::pearson(sample));
  return kExitOk;
}

void write_phantom(const phantom::Phantom& p, const fs::path& dir, const std::string& subject) {
  nifti::write_volume(p.image, dir / (subject + "_image.nii.gz"));
  nifti::write_volume(p.lung_truth.volume(), dir / (subject + "_mask.nii.gz"));
  nifti::write_volume(p.annotation_truth, dir / (subject + "_ann.nii.gz"));
}

int cmd_phantom(const PhantomArgs& a, std::ostream& out) {
  const fs::path dir(a.out);
  fs::create_directories(dir);
  std::ostringstream truth;
  truth << "subject_id,seed,lung_voxels,cat1_voxels,cat2_voxels,cat3_voxels\n";
  for (std::size_t i = 0; i < a.n; ++i) {
    phantom::PhantomSpec spec;
    if (a.kind == "random") {
      spec = phantom::random_spec(a.seed + i);
      spec.noise_sigma = a.noise;
    } else {
      spec = phantom::cohort_spec(i, a.n, a.seed, a.noise);
    }
    const phantom::Phantom p = phantom::generate(spec);
    char name[32];
    std::snprintf(name, sizeof name, "subject_%02zu", i);
    write_phantom(p, dir, name);
    truth << name << "," << spec.seed << "," << p.lung_truth.lung_voxels() << "," << p.true_counts[0] << ","
          << p.true_counts[1] << "," << p.true_counts[2] << "\n";
  }
  std::ofstream f(dir / "truth.csv", std::ios::binary);
  if (!(f << truth.str())) throw Error(ErrorCode::write, "cannot write truth.csv");
  out << "wrote " << a.n << " phantoms to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_serve(const ServeArgs& a, std::ostream& out) {
  service::SessionStore store(a.store);
  service::HttpServer server(store);
  const int port = server.bind(a.host, a.port);
  if (port < 0) throw Error(ErrorCode::io, "cannot bind " + a.host + ":" + std::to_string(a.port));
  out << "listening on http://" << a.host << ":" << port << std::endl;
  return server.listen_after_bind() ? kExitOk : kExitFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lung disease scoring toolkit", "apl"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with the same keys as the flags; flags win");
  app.set_version_flag("--version", "apl 0.1.0");

  Common common;
  auto add_common = [&common](CLI::App* sub, bool mask_flags) {
    sub->add_option("--precision", common.precision, "Significant digits; 0 = shortest round-trip")
        ->check(CLI::Range(0, 17));
    if (mask_flags) {
      sub->add_option("--side-convention", common.side, "Physical x convention for lung sides")
          ->check(CLI::IsMember({"lps", "ras"}));
      sub->add_option("--binarize-threshold", common.binarize, "Treat labels >= T as lung")
          ->check(CLI::Range(1, 65535));
    }
  };

  SegmentArgs seg;
  auto* segment = app.add_subcommand("segment", "Fallback lung segmentation of an image volume");
  segment->add_option("--image", seg.image, "Input image")->required()->check(CLI::ExistingFile);
  segment->add_option("--out", seg.out, "Output lung mask")->required();
  add_common(segment, true);

  SampleArgs smp;
  auto* sample = app.add_subcommand("sample", "Print the sampled slice indices of a lung mask");
  sample->add_option("--mask", smp.mask, "Lung mask")->required()->check(CLI::ExistingFile);
  sample->add_option("--k", smp.k, "Slices to sample")->check(CLI::PositiveNumber);
  add_common(sample, true);

  ScoreArgs sc;
  auto* score = app.add_subcommand("score", "Score an annotation volume against a lung mask");
  score->add_option("--mask", sc.mask, "Lung mask")->required()->check(CLI::ExistingFile);
  score->add_option("--ann", sc.ann, "Annotation label volume (codes 1-3)")->required()->check(CLI::ExistingFile);
  score->add_option("--mode", sc.mode, "pixel or grid")->check(CLI::IsMember({"pixel", "grid"}));
  score->add_option("--k", sc.k, "Slices to sample")->check(CLI::PositiveNumber);
  score->add_option("--cell-edge", sc.cell_edge, "Grid cell edge in voxels")->check(CLI::PositiveNumber);
  score->add_option("--tau", sc.tau, "Lung-cell threshold")->check(CLI::Range(0.0, 1.0));
  score->add_flag("--no-clip", sc.no_clip, "Count annotations outside the lung (pixel mode)");
  score->add_option("--subject", sc.subject, "Subject id for the CSV row");
  score->add_flag("--json", sc.json, "Emit the full report as JSON");
  score->add_flag("--no-header", sc.no_header, "Omit the CSV header");
  add_common(score, true);

  DiceArgs dc;
  auto* dice = app.add_subcommand("dice", "Dice overlap of two label volumes");
  dice->add_option("--a", dc.a, "First volume")->required()->check(CLI::ExistingFile);
  dice->add_option("--b", dc.b, "Second volume")->required()->check(CLI::ExistingFile);
  dice->add_option("--label", dc.label, "Restrict to one label (default: all nonzero)")
      ->check(CLI::Range(0, 65535));
  add_common(dice, false);

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Dice table over paired prediction/reference masks");
  evaluate->add_option("--pred", ev.pred, "Predicted masks or a directory")->required();
  evaluate->add_option("--gt", ev.gt, "Reference masks or a directory")->required();
  evaluate->add_option("--out", ev.out, "CSV output (default stdout)");
  add_common(evaluate, false);

  CompareArgs cmp;
  auto* compare = app.add_subcommand("compare", "Paired statistics on two CSV columns keyed by subject");
  compare->add_option("--a", cmp.a, "CSV holding the first measurement")->required()->check(CLI::ExistingFile);
  compare->add_option("--b", cmp.b, "CSV holding the second measurement (default: same as --a)")
      ->check(CLI::ExistingFile);
  compare->add_option("--column-a", cmp.column_a, "Column of the first measurement");
  compare->add_option("--column-b", cmp.column_b, "Column of the second measurement");
  compare->add_option("--where-a", cmp.where_a, "Row filter column=value for the first measurement");
  compare->add_option("--where-b", cmp.where_b, "Row filter column=value for the second measurement");
  compare->add_option("--key", cmp.key, "Subject id column");
  compare->add_option("--test", cmp.test, "ttest, pearson or both")->check(CLI::IsMember({"ttest", "pearson", "both"}));
  add_common(compare, false);

  PhantomArgs ph;
  auto* phantom_cmd = app.add_subcommand("phantom", "Write synthetic phantoms with ground truth");
  phantom_cmd->add_option("--out", ph.out, "Output directory")->required();
  phantom_cmd->add_option("--seed", ph.seed, "Base seed")->required();
  phantom_cmd->add_option("--n", ph.n, "Number of phantoms")->check(CLI::PositiveNumber);
  phantom_cmd->add_option("--noise", ph.noise, "Noise sigma as a fraction of the intensity range")
      ->check(CLI::Range(0.0, 1.0));
  phantom_cmd->add_option("--kind", ph.kind, "cohort (graded burden) or random")
      ->check(CLI::IsMember({"cohort", "random"}));

  ServeArgs sv;
  auto* serve = app.add_subcommand("serve", "Run the annotation session service");
  serve->add_option("--store", sv.store, "Session store directory");
  serve->add_option("--host", sv.host, "Bind address");
  serve->add_option("--port", sv.port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << app.version() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "apl: " << e.what() << "\n";
    for (auto* sub : app.get_subcommands()) {
      err << "usage: apl " << sub->get_name() << " --help\n";
    }
    return kExitUsage;
  }

  try {
    if (*segment) return cmd_segment(seg, common, out, err);
    if (*sample) return cmd_sample(smp, common, out, err);
    if (*score) return cmd_score(sc, common, out, err);
    if (*dice) return cmd_dice(dc, common, out);
    if (*evaluate) return cmd_evaluate(ev, common, out, err);
    if (*compare) return cmd_compare(cmp, common, out);
    if (*phantom_cmd) {
      if (ph.kind == "cohort" && ph.n < 2) {
        err << "apl: a cohort needs --n >= 2 (use --kind random for single phantoms)\n";
        return kExitUsage;
      }
      return cmd_phantom(ph, out);
    }
    if (*serve) return cmd_serve(sv, out);
  } catch (const Error& e) {
    err << "apl: " << to_string(e.code()) << ": " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "apl: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace apl::cli
