#include "vfl/report.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "vfl/error.h"
#include "vfl/scoring.h"

namespace vfl {
namespace {

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cells.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cells.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.emplace_back();
    } else if (c != '\r') {
      cells.back() += c;
    }
  }
  return cells;
}

std::string opt_number(const std::optional<double>& v) { return v ? format_number(*v) : "NA"; }

bool is_mi_label(const std::string& attack) { return attack.rfind("MI", 0) == 0; }

void check_attack_label(const std::string& a, const std::string& where) {
  if (is_mi_label(a)) {
    if (a == "MI") return;
    if (a.size() > 3 && a[2] == ':') {
      shadow_kind_from_string(a.substr(3));
      return;
    }
  }
  try {
    attack_kind_from_string(a);
  } catch (const ConfigError&) {
    throw ParseError(where + ": unknown attack '" + a + "'");
  }
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size())
    throw ParseError(where + ": expected a number, got '" + s + "'");
  return v;
}

std::uint64_t parse_uint(const std::string& s, const std::string& where) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size())
    throw ParseError(where + ": expected a non-negative integer, got '" + s + "'");
  return v;
}

std::optional<double> parse_opt(const std::string& s, const std::string& where) {
  if (s == "NA" || s.empty()) return std::nullopt;
  return parse_double(s, where);
}

bool larger_is_stronger(const std::string& protection) {
  try {
    return strength_increases_protection(protection_kind_from_string(protection));
  } catch (const ConfigError&) {
    return true;
  }
}

struct GroupKey {
  int setting;
  std::string algorithm, dataset;
  std::size_t aux;
  bool operator==(const GroupKey&) const = default;
};

// Seed-mean values for one (protection, strength) within a group.
struct MeanPoint {
  double strength = 0.0;
  std::vector<std::pair<std::string, std::pair<double, int>>> eps_p;  // attack -> (sum, count)
  double eps_u_sum = 0.0;
  int eps_u_count = 0;
  bool incomplete = false;

  void add_eps_p(const std::string& a, double v) {
    for (auto& [k, s] : eps_p)
      if (k == a) {
        s.first += v;
        ++s.second;
        return;
      }
    eps_p.push_back({a, {v, 1}});
  }
  std::vector<std::pair<std::string, double>> means() const {
    std::vector<std::pair<std::string, double>> out;
    for (const auto& [k, s] : eps_p) out.emplace_back(k, s.first / s.second);
    return out;
  }
  double eps_u() const { return eps_u_count ? eps_u_sum / eps_u_count : 0.0; }
};

struct ProtectionSeries {
  std::string protection;
  std::vector<MeanPoint> points;
};

struct Group {
  GroupKey key;
  std::vector<ProtectionSeries> series;
};

std::vector<Group> group_rows(const std::vector<RecordRow>& rows) {
  std::vector<Group> groups;
  // eps_u appears once per record; count it on the record's first row.
  std::string last_record;
  for (const auto& r : rows) {
    GroupKey key{r.setting, r.algorithm, r.dataset, r.aux_size};
    auto g = std::find_if(groups.begin(), groups.end(), [&](const Group& x) { return x.key == key; });
    if (g == groups.end()) {
      groups.push_back({key, {}});
      g = groups.end() - 1;
    }
    auto s = std::find_if(g->series.begin(), g->series.end(),
                          [&](const ProtectionSeries& x) { return x.protection == r.protection; });
    if (s == g->series.end()) {
      g->series.push_back({r.protection, {}});
      s = g->series.end() - 1;
    }
    auto p = std::find_if(s->points.begin(), s->points.end(),
                          [&](const MeanPoint& x) { return x.strength == r.strength; });
    if (p == s->points.end()) {
      s->points.push_back({});
      p = s->points.end() - 1;
      p->strength = r.strength;
    }
    if (!r.eps_p || !r.eps_u) {
      p->incomplete = true;
      continue;
    }
    p->add_eps_p(r.attack, *r.eps_p);
    std::ostringstream rec;
    rec << r.setting << '|' << r.algorithm << '|' << r.dataset << '|' << r.protection << '|'
        << format_number(r.strength) << '|' << r.seed << '|' << r.aux_size;
    if (rec.str() != last_record) {
      p->eps_u_sum += *r.eps_u;
      ++p->eps_u_count;
      last_record = rec.str();
    }
  }
  return groups;
}

double max_of(const std::vector<std::pair<std::string, double>>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& [k, x] : v) m = std::max(m, x);
  return m;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-') ? c : '_';
  return out;
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "NA";
  if (v == 0.0) return "0";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::vector<RecordRow> flatten(const std::vector<TradeoffRecord>& records) {
  std::vector<RecordRow> rows;
  for (const auto& r : records)
    for (const auto& [attack, eps] : r.eps_p) {
      RecordRow row;
      row.setting = r.setting;
      row.algorithm = r.algorithm;
      row.dataset = r.dataset;
      row.protection = r.protection;
      row.strength = r.strength;
      row.seed = r.seed;
      row.aux_size = r.aux_size;
      row.attack = attack;
      if (!r.failed) {
        row.eps_p = eps;
        row.eps_u = r.eps_u;
        row.pu_score = r.pu;
      }
      row.omega_g = r.omega_g;
      rows.push_back(std::move(row));
    }
  return rows;
}

std::string write_records_csv(const std::vector<RecordRow>& rows) {
  std::string out;
  for (std::size_t i = 0; i < std::size(kRecordColumns); ++i) {
    if (i) out += ',';
    out += kRecordColumns[i];
  }
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.setting) + ',' + csv_cell(r.algorithm) + ',' + csv_cell(r.dataset) + ',' +
           csv_cell(r.protection) + ',' + format_number(r.strength) + ',' + std::to_string(r.seed) + ',' +
           (r.aux_size ? std::to_string(r.aux_size) : "NA") + ',' + csv_cell(r.attack) + ',' +
           opt_number(r.eps_p) + ',' + opt_number(r.eps_u) + ',' + opt_number(r.omega_g) + ',' +
           (r.pu_score ? std::to_string(*r.pu_score) : "NA") + '\n';
  }
  return out;
}

std::vector<RecordRow> parse_records_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<RecordRow> rows;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv(line);
    const std::string where = "line " + std::to_string(line_no);
    if (!header) {
      if (cells.size() != std::size(kRecordColumns))
        throw ParseError(where + ": header must list " + std::to_string(std::size(kRecordColumns)) + " columns");
      for (std::size_t i = 0; i < cells.size(); ++i)
        if (cells[i] != kRecordColumns[i])
          throw ParseError(where + ": expected column '" + kRecordColumns[i] + "', got '" + cells[i] + "'");
      header = true;
      continue;
    }
    if (cells.size() != std::size(kRecordColumns))
      throw ParseError(where + ": expected " + std::to_string(std::size(kRecordColumns)) + " cells, got " +
                       std::to_string(cells.size()));
    RecordRow r;
    r.setting = static_cast<int>(parse_uint(cells[0], where + ", column setting"));
    r.algorithm = cells[1];
    r.dataset = cells[2];
    r.protection = cells[3];
    r.strength = parse_double(cells[4], where + ", column strength");
    r.seed = parse_uint(cells[5], where + ", column seed");
    r.aux_size = cells[6] == "NA" ? 0 : parse_uint(cells[6], where + ", column aux_size");
    r.attack = cells[7];
    check_attack_label(r.attack, where);
    r.eps_p = parse_opt(cells[8], where + ", column eps_p");
    r.eps_u = parse_opt(cells[9], where + ", column eps_u");
    r.omega_g = parse_opt(cells[10], where + ", column omega_g");
    if (cells[11] != "NA" && !cells[11].empty())
      r.pu_score = static_cast<int>(parse_uint(cells[11], where + ", column pu_score"));
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string write_records_json(const std::vector<RecordRow>& rows) {
  // Numbers are written as their shortest round-trip text, so the file is
  // byte-stable and parses back exactly.
  std::string out = "[";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    auto num = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string("null"); };
    out += i ? ",\n  " : "\n  ";
    out += "{\"setting\": " + std::to_string(r.setting) +
           ", \"algorithm\": " + nlohmann::json(r.algorithm).dump() +
           ", \"dataset\": " + nlohmann::json(r.dataset).dump() +
           ", \"protection\": " + nlohmann::json(r.protection).dump() +
           ", \"strength\": " + format_number(r.strength) + ", \"seed\": " + std::to_string(r.seed) +
           ", \"aux_size\": " + (r.aux_size ? std::to_string(r.aux_size) : "null") +
           ", \"attack\": " + nlohmann::json(r.attack).dump() + ", \"eps_p\": " + num(r.eps_p) +
           ", \"eps_u\": " + num(r.eps_u) + ", \"omega_g\": " + num(r.omega_g) +
           ", \"pu_score\": " + (r.pu_score ? std::to_string(*r.pu_score) : "null") + "}";
  }
  out += rows.empty() ? "]\n" : "\n]\n";
  return out;
}

std::vector<RecordRow> parse_records_json(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("records are not valid JSON: ") + e.what());
  }
  if (!root.is_array()) throw ParseError("records JSON must be an array of rows");
  std::vector<RecordRow> rows;
  for (std::size_t i = 0; i < root.size(); ++i) {
    const auto& j = root[i];
    const std::string where = "row " + std::to_string(i);
    try {
      RecordRow r;
      r.setting = j.at("setting").get<int>();
      r.algorithm = j.at("algorithm").get<std::string>();
      r.dataset = j.at("dataset").get<std::string>();
      r.protection = j.at("protection").get<std::string>();
      r.strength = j.at("strength").get<double>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.aux_size = j.at("aux_size").is_null() ? 0 : j.at("aux_size").get<std::size_t>();
      r.attack = j.at("attack").get<std::string>();
      check_attack_label(r.attack, where);
      auto opt = [&](const char* k) -> std::optional<double> {
        if (j.at(k).is_null()) return std::nullopt;
        return j.at(k).get<double>();
      };
      r.eps_p = opt("eps_p");
      r.eps_u = opt("eps_u");
      r.omega_g = opt("omega_g");
      if (!j.at("pu_score").is_null()) r.pu_score = j.at("pu_score").get<int>();
      rows.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
  return rows;
}

std::vector<ScoreLine> compute_scores(const std::vector<RecordRow>& rows) {
  std::vector<ScoreLine> lines;
  for (const auto& g : group_rows(rows)) {
    for (const auto& s : g.series) {
      ScoreLine line{g.key.setting, g.key.algorithm, g.key.dataset, g.key.aux, s.protection};
      std::vector<const MeanPoint*> complete;
      for (const auto& p : s.points)
        if (!p.incomplete && !p.eps_p.empty()) complete.push_back(&p);
      if (complete.empty()) continue;
      const bool mi = is_mi_label(complete.front()->eps_p.front().first);
      const bool stronger_up = larger_is_stronger(s.protection);
      if (mi) {
        // Report the strength with the lowest worst-case reconstruction SSIM.
        const MeanPoint* best = nullptr;
        for (const MeanPoint* p : complete) {
          const double m = max_of(p->means());
          const bool stronger = best && (stronger_up ? p->strength > best->strength : p->strength < best->strength);
          if (!best || m < max_of(best->means()) || (m == max_of(best->means()) && stronger)) best = p;
        }
        line.best_strength = best->strength;
        line.eps_u = best->eps_u();
        line.eps_p = best->means();
      } else {
        std::vector<StrengthPoint> points;
        std::vector<AttackKind> attacks;
        for (const auto& [name, sum] : complete.front()->eps_p) attacks.push_back(attack_kind_from_string(name));
        for (const MeanPoint* p : complete) {
          StrengthPoint sp;
          sp.strength = p->strength;
          sp.eps_u = p->eps_u();
          for (const auto& [name, v] : p->means()) sp.eps_p[attack_kind_from_string(name)] = v;
          points.push_back(std::move(sp));
        }
        const OptimalScore best = optimal_pu_score(points, attacks, stronger_up);
        line.score = best.score;
        line.best_strength = best.strength;
        for (const MeanPoint* p : complete)
          if (p->strength == best.strength) {
            line.eps_u = p->eps_u();
            line.eps_p = p->means();
          }
      }
      lines.push_back(std::move(line));
    }
  }
  return lines;
}

std::string format_score_table(const std::vector<ScoreLine>& lines) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-7s %-5s %-28s %-5s %-11s %9s %7s  %-34s %s\n", "setting", "algo", "dataset",
                "aux", "protection", "strength", "eps_u", "eps_p", "S*");
  out += buf;
  for (const auto& l : lines) {
    std::string eps;
    for (const auto& [a, v] : l.eps_p) {
      std::snprintf(buf, sizeof buf, "%s%s=%.2f", eps.empty() ? "" : " ", a.c_str(), v);
      eps += buf;
    }
    std::snprintf(buf, sizeof buf, "%-7d %-5s %-28s %-5s %-11s %9.4g %7.2f  %-34s %s\n", l.setting,
                  l.algorithm.c_str(), l.dataset.c_str(), l.aux_size ? std::to_string(l.aux_size).c_str() : "-",
                  l.protection.c_str(), l.best_strength, l.eps_u, eps.c_str(),
                  l.score ? std::to_string(*l.score).c_str() : "NA");
    out += buf;
  }
  return out;
}

std::vector<std::optional<int>> recompute_record_scores(const std::vector<RecordRow>& rows) {
  std::vector<std::optional<int>> out;
  std::size_t i = 0;
  while (i < rows.size()) {
    std::size_t j = i;
    auto same = [&](const RecordRow& a, const RecordRow& b) {
      return a.setting == b.setting && a.algorithm == b.algorithm && a.dataset == b.dataset &&
             a.protection == b.protection && a.strength == b.strength && a.seed == b.seed && a.aux_size == b.aux_size;
    };
    bool ok = true, label = true;
    double worst = -std::numeric_limits<double>::infinity();
    while (j < rows.size() && same(rows[i], rows[j])) {
      if (!rows[j].eps_p || !rows[j].eps_u) ok = false;
      if (is_mi_label(rows[j].attack)) label = false;
      if (rows[j].eps_p) worst = std::max(worst, *rows[j].eps_p);
      ++j;
    }
    out.push_back(ok && label ? std::optional<int>(pu_score(worst, *rows[i].eps_u)) : std::nullopt);
    i = j;
  }
  return out;
}

std::vector<CurveFile> build_curves(const std::vector<RecordRow>& rows) {
  std::vector<CurveFile> files;
  for (const auto& g : group_rows(rows)) {
    CurveFile f;
    f.name = "curve_s" + std::to_string(g.key.setting) + "_" + sanitize(g.key.algorithm) + "_" +
             sanitize(g.key.dataset) + (g.key.aux ? "_aux" + std::to_string(g.key.aux) : "") + ".csv";
    f.content = "protection,strength,eps_u,eps_p_max\n";
    for (const auto& s : g.series) {
      std::vector<const MeanPoint*> pts;
      for (const auto& p : s.points)
        if (!p.incomplete && !p.eps_p.empty()) pts.push_back(&p);
      std::stable_sort(pts.begin(), pts.end(), [](auto* a, auto* b) { return a->strength < b->strength; });
      for (const MeanPoint* p : pts)
        f.content += csv_cell(s.protection) + "," + format_number(p->strength) + "," + format_number(p->eps_u()) +
                     "," + format_number(max_of(p->means())) + "\n";
    }
    files.push_back(std::move(f));
  }
  return files;
}

}  // namespace vfl
