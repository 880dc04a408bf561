#include "mograd/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <fmt/format.h>

namespace mograd {

using nlohmann::json;

namespace {

std::string fixed3(const std::optional<double>& v) { return v ? fmt::format("{:.3f}", *v) : "n/a"; }
std::string full(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : ""; }

std::string signed3(const std::optional<double>& v) {
  if (!v) return "n/a";
  return fmt::format("{:+.3f}", *v);
}

std::string cell_label(const DecompositionMode& mode, ValidationPolicy v) {
  std::string code = mode.code();
  if (!mode.is_single_task()) std::transform(code.begin(), code.end(), code.begin(), ::toupper);
  else code = "Single-Task";
  return fmt::format("{} / {}", code, v == ValidationPolicy::MaeGate ? "MAE gate" : "no gate");
}

std::string mode_label(const DecompositionMode& mode) {
  if (mode.is_single_task()) return "Single-Task";
  std::string code = mode.code();
  std::transform(code.begin(), code.end(), code.begin(), ::toupper);
  return code;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Series {
  std::string name;
  std::string color;
  std::vector<std::pair<double, double>> points;
  bool dashed = false;
};

std::string line_chart(const std::string& title, const std::string& y_label, const std::vector<Series>& series) {
  constexpr double W = 720, H = 420, L = 70, R = 170, T = 40, B = 50;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      if (first) {
        xmin = xmax = x;
        ymin = ymax = y;
        first = false;
      }
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) {
    ymin -= 0.05;
    ymax += 0.05;
  }
  const double pad = (ymax - ymin) * 0.08;
  ymin -= pad;
  ymax += pad;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n",
      W, H, W, H);
  svg += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", W, H);
  svg += fmt::format("<text x=\"{}\" y=\"22\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n", (L + W - R) / 2,
                     xml_escape(title));
  svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", L, H - B, W - R);
  svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", L, T, H - B);
  for (int i = 0; i <= 5; ++i) {
    const double y = ymin + (ymax - ymin) * i / 5.0;
    svg += fmt::format("<line x1=\"{0}\" y1=\"{1:.1f}\" x2=\"{2}\" y2=\"{1:.1f}\" stroke=\"#e5e5e5\"/>\n", L, py(y), W - R);
    svg += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.3f}</text>\n", L - 6, py(y) + 4, y);
  }
  const int xticks = static_cast<int>(std::min(12.0, xmax - xmin));
  for (int i = 0; i <= xticks; ++i) {
    const double x = xmin + (xmax - xmin) * i / std::max(1, xticks);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{:g}</text>\n", px(x), H - B + 18, x);
  }
  svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">step</text>\n", (L + W - R) / 2, H - 12);
  svg += fmt::format("<text x=\"16\" y=\"{0}\" transform=\"rotate(-90 16 {0})\" text-anchor=\"middle\">{1}</text>\n",
                     (T + H - B) / 2, xml_escape(y_label));
  int legend = 0;
  for (const auto& s : series) {
    if (s.points.empty()) continue;
    std::string pts;
    for (const auto& [x, y] : s.points) pts += fmt::format("{:.1f},{:.1f} ", px(x), py(y));
    svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\"{} points=\"{}\"/>\n", s.color,
                       s.dashed ? " stroke-dasharray=\"6 4\"" : "", pts);
    const double ly = T + 10 + 20 * legend++;
    svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" stroke-width=\"2\"/>\n",
                       W - R + 15, ly, W - R + 40, s.color);
    svg += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", W - R + 46, ly + 4, xml_escape(s.name));
  }
  svg += "</svg>\n";
  return svg;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string file_stem(const CellResult& c) {
  return fmt::format("{}_{}", c.cell.mode.code(), to_string(c.cell.validation));
}

}  // namespace

std::vector<CellResult> cells_from_runs(std::vector<LoadedRun> runs) {
  auto grid = full_grid();
  auto rank = [&](const SeedRun& r) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (grid[i].mode == r.mode && grid[i].validation == r.validation) return i;
    }
    return grid.size();
  };
  std::stable_sort(runs.begin(), runs.end(), [&](const LoadedRun& a, const LoadedRun& b) {
    const auto ra = rank(a.run), rb = rank(b.run);
    return ra != rb ? ra < rb : a.run.seed < b.run.seed;
  });
  std::vector<CellResult> cells;
  for (auto& lr : runs) {
    if (cells.empty() || !(cells.back().cell.mode == lr.run.mode) ||
        cells.back().cell.validation != lr.run.validation) {
      cells.push_back({});
      cells.back().cell = {lr.run.mode, lr.run.validation};
    }
    cells.back().runs.push_back(std::move(lr.run));
  }
  for (auto& c : cells) {
    c.row = summarize(c.cell.mode, c.cell.validation, c.runs);
    c.trajectory = mean_trajectory(c.runs);
  }
  return cells;
}

std::string summary_markdown(const std::vector<SuiteRow>& rows) {
  std::string out = "| Configuration | Seeds | Initial | Best (step) | Δ | HVI |\n|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    const std::string best = r.best ? fmt::format("{:.3f} ({})", *r.best, *r.best_step) : "n/a";
    std::string seeds = std::to_string(r.seeds);
    if (r.failed_seeds > 0) seeds += fmt::format(" ({} failed)", r.failed_seeds);
    out += fmt::format("| {} | {} | {} | {} | {} | {} |\n", cell_label(r.mode, r.validation), seeds,
                       fixed3(r.initial), best, signed3(r.delta), fixed3(r.hypervolume));
  }
  bool any_error = false;
  for (const auto& r : rows) {
    if (r.error.empty()) continue;
    if (!any_error) out += "\nErrors:\n\n";
    any_error = true;
    out += fmt::format("- {}: {}\n", cell_label(r.mode, r.validation), r.error);
  }
  return out;
}

std::string summary_csv(const std::vector<SuiteRow>& rows) {
  std::string out = "mode,validation,seeds,failed_seeds,initial,best,best_step,delta,hvi\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{}\n", r.mode.code(), to_string(r.validation), r.seeds,
                       r.failed_seeds, full(r.initial), full(r.best),
                       r.best_step ? std::to_string(*r.best_step) : "", full(r.delta), full(r.hypervolume));
  }
  return out;
}

std::string trajectory_csv(const std::vector<TrajectoryPoint>& trajectory) {
  std::string out = "step";
  if (!trajectory.empty()) {
    for (const auto& [c, v] : trajectory.front().rho) out += "," + c;
  }
  out += ",task_avg,hvi,seeds\n";
  for (const auto& p : trajectory) {
    out += std::to_string(p.step);
    for (const auto& [c, v] : p.rho) out += "," + full(v);
    out += fmt::format(",{},{},{}\n", full(p.task_rho), full(p.hypervolume), p.seeds);
  }
  return out;
}

std::string trajectory_svg(const std::vector<TrajectoryPoint>& trajectory, const std::string& title) {
  std::vector<Series> series;
  if (!trajectory.empty()) {
    for (std::size_t k = 0; k < trajectory.front().rho.size(); ++k) {
      Series s{trajectory.front().rho[k].first, kPalette[k % 6], {}, false};
      for (const auto& p : trajectory) {
        if (k < p.rho.size() && p.rho[k].second) s.points.emplace_back(p.step, *p.rho[k].second);
      }
      series.push_back(std::move(s));
    }
  }
  Series avg{"task average", "#888888", {}, true};
  for (const auto& p : trajectory) {
    if (p.task_rho) avg.points.emplace_back(p.step, *p.task_rho);
  }
  series.push_back(std::move(avg));
  return line_chart(title, "Spearman rho (test)", series);
}

std::string hypervolume_svg(const std::vector<TrajectoryPoint>& trajectory, const std::string& title) {
  Series hv{"HVI", "#111111", {}, false};
  for (const auto& p : trajectory) {
    if (p.hypervolume) hv.points.emplace_back(p.step, *p.hypervolume);
  }
  return line_chart(title, "hypervolume", {hv});
}

namespace {

std::string mean_std(const DiagnosticAggregate& a) {
  return a.std ? fmt::format("{:.1f} ± {:.1f}", a.mean, *a.std) : fmt::format("{:.1f}", a.mean);
}

}  // namespace

std::string diagnostics_by_mode_markdown(const std::vector<DiagnosticScore>& scores) {
  const auto rows = aggregate_diagnostics(scores, {"kind", "mode", "validation"});
  std::string out = "| Kind | Mode | Validation | Mean ± std | n | missing |\n|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    const auto mode = parse_mode(r.group[1].second);
    out += fmt::format("| {} | {} | {} | {} | {} | {} |\n", r.group[0].second, mode_label(mode), r.group[2].second,
                       mean_std(r), r.n, r.missing);
  }
  return out;
}

std::string diagnostics_by_criterion_markdown(const std::vector<DiagnosticScore>& scores,
                                              const std::vector<Criterion>& criteria) {
  const auto rows = aggregate_diagnostics(scores, {"kind", "mode", "criterion"});
  std::map<std::pair<std::string, std::string>, std::map<std::string, std::string>> grid;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.group[0].second, r.group[1].second);
    if (!grid.contains(key)) order.push_back(key);
    grid[key][r.group[2].second] = mean_std(r);
  }
  std::string out = "| Kind | Mode |";
  std::string rule = "|---|---|";
  for (const auto& c : criteria) {
    out += " " + c.id + " |";
    rule += "---|";
  }
  out += "\n" + rule + "\n";
  for (const auto& key : order) {
    out += fmt::format("| {} | {} |", key.first, mode_label(parse_mode(key.second)));
    for (const auto& c : criteria) {
      const auto it = grid[key].find(c.id);
      out += " " + (it != grid[key].end() ? it->second : std::string("n/a")) + " |";
    }
    out += "\n";
  }
  return out;
}

std::string diagnostics_csv(const std::vector<DiagnosticAggregate>& rows) {
  std::string out;
  if (rows.empty()) return out;
  for (const auto& [field, value] : rows.front().group) out += field + ",";
  out += "mean,std,n,missing\n";
  for (const auto& r : rows) {
    for (const auto& [field, value] : r.group) out += value + ",";
    out += fmt::format("{},{},{},{}\n", r.mean, full(r.std), r.n, r.missing);
  }
  return out;
}

json to_json(const CherryReport& r) {
  json results = json::array();
  for (const auto& res : r.results) {
    json choices = json::array();
    for (const auto& c : res.choices) {
      choices.push_back({{"criterion", c.criterion},
                         {"step", c.step},
                         {"seed", c.seed},
                         {"instruction", c.instruction},
                         {"value", c.value}});
    }
    results.push_back({{"metric", to_string(res.metric)}, {"choices", choices}, {"metrics", to_json(res.metrics)}});
  }
  json criteria = json::array();
  for (const auto& c : r.criteria) criteria.push_back({{"id", c.id}, {"scale_min", c.scale_min}, {"scale_max", c.scale_max}});
  auto rho_row = [](const CherryReport::RhoRow& row) {
    json o = json::array();
    for (const auto& [c, v] : row) o.push_back({{"criterion", c}, {"rho", v ? json(*v) : json(nullptr)}});
    return o;
  };
  return {{"schema_version", kRunLogSchemaVersion},
          {"validation", to_string(r.validation)},
          {"criteria", criteria},
          {"initial", rho_row(r.initial)},
          {"single_task", rho_row(r.single_task)},
          {"results", results}};
}

CherryReport cherry_report_from_json(const json& j) {
  CherryReport r;
  r.validation = parse_validation(j.at("validation").get<std::string>());
  for (const auto& c : j.at("criteria")) r.criteria.push_back({c.at("id"), c.at("scale_min"), c.at("scale_max")});
  auto rho_row = [](const json& arr) {
    CherryReport::RhoRow row;
    for (const auto& e : arr) {
      std::optional<double> v;
      if (!e.at("rho").is_null()) v = e.at("rho").get<double>();
      row.emplace_back(e.at("criterion").get<std::string>(), v);
    }
    return row;
  };
  r.initial = rho_row(j.at("initial"));
  r.single_task = rho_row(j.at("single_task"));
  for (const auto& res : j.at("results")) {
    std::vector<CherryPickChoice> choices;
    InstructionMap instructions;
    for (const auto& c : res.at("choices")) {
      choices.push_back({c.at("criterion"), c.at("step"), c.at("seed"), c.at("instruction"), c.at("value")});
      instructions[choices.back().criterion] = choices.back().instruction;
    }
    r.results.push_back({parse_selection_metric(res.at("metric").get<std::string>()), std::move(choices),
                         JudgePrompt(JudgePrompt::default_skeleton(r.criteria), r.criteria, std::move(instructions)),
                         metric_vector_from_json(res.at("metrics"))});
  }
  return r;
}

std::string cherry_markdown(const std::vector<CherryReport>& reports) {
  std::string out;
  for (const auto& r : reports) {
    out += fmt::format("### Cherry-pick from single-task runs ({})\n\n",
                       r.validation == ValidationPolicy::MaeGate ? "MAE gate" : "no gate");
    out += "| Prompt | Selection metric |";
    std::string rule = "|---|---|";
    for (const auto& c : r.criteria) {
      out += " " + c.id + " |";
      rule += "---|";
    }
    out += " Avg ρ |\n" + rule + "---|\n";
    auto rho_cells = [&](const CherryReport::RhoRow& row) {
      std::string cells;
      std::vector<CriterionMetrics> metrics;
      for (const auto& c : r.criteria) {
        std::optional<double> v;
        for (const auto& [id, x] : row) {
          if (id == c.id) v = x;
        }
        cells += " " + fixed3(v) + " |";
        metrics.push_back({c.id, v, 0.0, 0.0});
      }
      return cells + " " + fixed3(MetricVector{metrics, 0}.task_averaged_rho()) + " |";
    };
    out += "| Initial | n/a |" + rho_cells(r.initial) + "\n";
    out += "| Single-task (per-criterion prompts) | n/a |" + rho_cells(r.single_task) + "\n";
    for (const auto& res : r.results) {
      out += fmt::format("| Cherry-pick | {} |", to_string(res.metric));
      for (const auto& c : r.criteria) out += " " + fixed3(res.metrics.at(c.id).rho) + " |";
      out += " " + fixed3(res.metrics.task_averaged_rho()) + " |\n";
    }
    out += "\nChosen instructions:\n\n";
    for (const auto& res : r.results) {
      for (const auto& ch : res.choices) {
        out += fmt::format("- {} / {}: step {}, seed {}, value {:.3f}\n", to_string(res.metric), ch.criterion, ch.step,
                           ch.seed, ch.value);
      }
    }
    out += "\n";
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out << text;
}

std::vector<std::filesystem::path> write_summary_report(const std::vector<CellResult>& cells,
                                                        const std::filesystem::path& out_dir) {
  std::vector<SuiteRow> rows;
  for (const auto& c : cells) rows.push_back(c.row);
  const auto md = out_dir / "summary.md";
  const auto csv = out_dir / "summary.csv";
  write_text(md, summary_markdown(rows));
  write_text(csv, summary_csv(rows));
  return {md, csv};
}

std::vector<std::filesystem::path> write_trajectory_report(const std::vector<CellResult>& cells,
                                                           const std::filesystem::path& out_dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& c : cells) {
    const auto stem = file_stem(c);
    const auto label = cell_label(c.cell.mode, c.cell.validation);
    files.push_back(out_dir / fmt::format("trajectory_{}.csv", stem));
    write_text(files.back(), trajectory_csv(c.trajectory));
    files.push_back(out_dir / fmt::format("trajectory_{}.svg", stem));
    write_text(files.back(), trajectory_svg(c.trajectory, label));
    files.push_back(out_dir / fmt::format("hvi_{}.svg", stem));
    write_text(files.back(), hypervolume_svg(c.trajectory, label + ": accumulated HVI"));
  }
  return files;
}

}  // namespace mograd
