// Copyright 2026 The Spectracast Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spectracast/training.hpp"

namespace spectracast::train {

namespace {

using json = nlohmann::json;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParseError("report csv line " + std::to_string(line_no) + ": bad number '" + s + "'");
  }
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

std::string TrainConfig::to_json_string() const {
  json j;
  j["lr"] = lr;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["eps"] = eps;
  j["batch"] = batch;
  j["iterations"] = iterations;
  j["seed"] = seed;
  j["patience"] = patience;
  j["checkpoint_every"] = checkpoint_every;
  return j.dump(2);
}

TrainConfig TrainConfig::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: invalid JSON: ") + e.what());
  }
  const std::set<std::string> allowed{"lr",   "beta1",      "beta2", "eps",
                                      "batch", "iterations", "seed",  "patience",
                                      "checkpoint_every"};
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("train config: unknown key '" + key + "'");
  }
  TrainConfig cfg;
  cfg.lr = j.value("lr", cfg.lr);
  cfg.beta1 = j.value("beta1", cfg.beta1);
  cfg.beta2 = j.value("beta2", cfg.beta2);
  cfg.eps = j.value("eps", cfg.eps);
  cfg.batch = j.value("batch", cfg.batch);
  cfg.iterations = j.value("iterations", cfg.iterations);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.patience = j.value("patience", cfg.patience);
  cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
  return cfg;
}

std::string report_csv_string(std::span<const EvalReport> reports) {
  if (reports.empty()) throw ReportError("report: nothing to emit");
  const int k = reports[0].horizons;
  for (const auto& r : reports) {
    if (r.horizons != k) {
      throw ReportError("report: horizon counts disagree (" + std::to_string(r.horizons) +
                        " vs " + std::to_string(k) + ")");
    }
    if (static_cast<int>(r.mse.size()) != k || static_cast<int>(r.rmse.size()) != k ||
        static_cast<int>(r.psnr_db.size()) != k) {
      throw ReportError("report for '" + r.model + "' has inconsistent column lengths");
    }
  }
  std::ostringstream os;
  os << "model,horizon,mse,rmse,psnr\n";
  for (const auto& r : reports) {
    for (int h = 0; h < k; ++h) {
      os << r.model << ',' << (h + 1) << ',' << fmt(r.mse[h]) << ',' << fmt(r.rmse[h]) << ','
         << fmt(r.psnr_db[h]) << "\n";
    }
    os << r.model << ",avg," << fmt(r.avg_mse) << ',' << fmt(r.avg_rmse) << ','
       << fmt(r.avg_psnr) << "\n";
  }
  return os.str();
}

void report_emit_csv(std::span<const EvalReport> reports, const std::filesystem::path& path) {
  const std::string text = report_csv_string(reports);
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << text;
}

std::vector<EvalReport> report_parse_csv_string(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "model,horizon,mse,rmse,psnr") {
    throw ParseError("report csv: missing or bad header");
  }
  std::vector<EvalReport> reports;
  auto find = [&](const std::string& name) -> EvalReport& {
    for (auto& r : reports) {
      if (r.model == name) return r;
    }
    reports.emplace_back();
    reports.back().model = name;
    return reports.back();
  };
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    for (const char c : line) {
      if (c == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    fields.push_back(cur);
    if (fields.size() != 5) {
      throw ParseError("report csv line " + std::to_string(line_no) + ": expected 5 fields");
    }
    EvalReport& r = find(fields[0]);
    if (fields[1] == "avg") {
      r.avg_mse = parse_double(fields[2], line_no);
      r.avg_rmse = parse_double(fields[3], line_no);
      r.avg_psnr = parse_double(fields[4], line_no);
    } else {
      r.mse.push_back(parse_double(fields[2], line_no));
      r.rmse.push_back(parse_double(fields[3], line_no));
      r.psnr_db.push_back(parse_double(fields[4], line_no));
      r.horizons = static_cast<int>(r.mse.size());
    }
  }
  if (reports.empty()) throw ParseError("report csv: no data rows");
  return reports;
}

std::vector<EvalReport> report_parse_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return report_parse_csv_string(ss.str());
}

namespace {

struct Panel {
  double x0, y0, w, h;
  std::string title;
};

void draw_series(std::ostringstream& os, const Panel& p, std::span<const EvalReport> reports,
                 bool use_psnr) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                  "#8c564b"};
  const int k = reports[0].horizons;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& r : reports) {
    for (int h = 0; h < k; ++h) {
      const double v = use_psnr ? r.psnr_db[h] : r.mse[h];
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (!std::isfinite(lo)) {
    lo = 0;
    hi = 1;
  }
  if (hi - lo < 1e-12) {
    lo -= 1;
    hi += 1;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  auto px = [&](double step) { return p.x0 + (k == 1 ? 0.5 : (step - 1) / (k - 1.0)) * p.w; };
  auto py = [&](double v) { return p.y0 + p.h - (v - lo) / (hi - lo) * p.h; };

  os << "<rect x=\"" << p.x0 << "\" y=\"" << p.y0 << "\" width=\"" << p.w << "\" height=\""
     << p.h << "\" fill=\"none\" stroke=\"#444\"/>\n";
  os << "<text x=\"" << p.x0 + p.w / 2 << "\" y=\"" << p.y0 - 10
     << "\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(p.title) << "</text>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double v = lo + (hi - lo) * tick / 4.0;
    const double y = py(v);
    char label[32];
    std::snprintf(label, sizeof(label), "%.4g", v);
    os << "<line x1=\"" << p.x0 - 4 << "\" y1=\"" << y << "\" x2=\"" << p.x0 << "\" y2=\"" << y
       << "\" stroke=\"#444\"/>\n";
    os << "<text x=\"" << p.x0 - 7 << "\" y=\"" << y + 4
       << "\" text-anchor=\"end\" font-size=\"10\">" << label << "</text>\n";
  }
  for (int h = 1; h <= k; ++h) {
    const double x = px(h);
    os << "<line x1=\"" << x << "\" y1=\"" << p.y0 + p.h << "\" x2=\"" << x << "\" y2=\""
       << p.y0 + p.h + 4 << "\" stroke=\"#444\"/>\n";
    os << "<text x=\"" << x << "\" y=\"" << p.y0 + p.h + 16
       << "\" text-anchor=\"middle\" font-size=\"10\">" << h << "</text>\n";
  }
  os << "<text x=\"" << p.x0 + p.w / 2 << "\" y=\"" << p.y0 + p.h + 32
     << "\" text-anchor=\"middle\" font-size=\"12\">forecast step</text>\n";
  for (std::size_t ri = 0; ri < reports.size(); ++ri) {
    const auto& r = reports[ri];
    std::ostringstream pts;
    bool any = false;
    for (int h = 0; h < k; ++h) {
      const double v = use_psnr ? r.psnr_db[h] : r.mse[h];
      if (!std::isfinite(v)) continue;
      pts << px(h + 1) << ',' << py(v) << ' ';
      any = true;
    }
    if (any) {
      os << "<polyline fill=\"none\" stroke=\"" << kColors[ri % 6]
         << "\" stroke-width=\"1.5\" points=\"" << pts.str() << "\"/>\n";
    }
  }
}

}  // namespace

std::string report_svg_string(std::span<const EvalReport> reports) {
  if (reports.empty()) throw ReportError("report: nothing to plot");
  const int k = reports[0].horizons;
  for (const auto& r : reports) {
    if (r.horizons != k) throw ReportError("report: horizon counts disagree");
  }
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"920\" height=\"420\" "
        "viewBox=\"0 0 920 420\">\n";
  os << "<rect width=\"920\" height=\"420\" fill=\"white\"/>\n";
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                  "#8c564b"};
  for (std::size_t ri = 0; ri < reports.size(); ++ri) {
    const double x = 60 + 160.0 * static_cast<double>(ri);
    os << "<line x1=\"" << x << "\" y1=\"18\" x2=\"" << x + 24 << "\" y2=\"18\" stroke=\""
       << kColors[ri % 6] << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << x + 30 << "\" y=\"22\" font-size=\"12\">"
       << xml_escape(reports[ri].model) << "</text>\n";
  }
  draw_series(os, {70, 60, 340, 290, "MSE vs forecast step"}, reports, false);
  draw_series(os, {540, 60, 340, 290, "PSNR (dB) vs forecast step"}, reports, true);
  os << "</svg>\n";
  return os.str();
}

void report_emit_svg(std::span<const EvalReport> reports, const std::filesystem::path& path) {
  const std::string text = report_svg_string(reports);
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << text;
}

void loss_history_write_csv(std::span<const LossPoint> history,
                            const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << "iteration,train_loss,val_loss\n";
  for (const auto& p : history) {
    f << p.iteration << ',' << fmt(p.train_loss) << ',';
    if (p.has_val) f << fmt(p.val_loss);
    f << "\n";
  }
}

}  // namespace spectracast::train
