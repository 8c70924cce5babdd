#include "qrec/report.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "qrec/experiment.hpp"

namespace qrec {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(line);
  while (std::getline(in, item, ',')) out.push_back(item);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%8.4f", v);
  return buf;
}

}  // namespace

RunSummary load_run_summary(const std::string& run_dir) {
  const fs::path dir(run_dir);
  const KeyValueFile manifest = KeyValueFile::parse_file((dir / "manifest.cfg").string());
  RunSummary summary;
  summary.dir = run_dir;
  summary.method = manifest.get_string("method");
  summary.seed = static_cast<std::uint64_t>(manifest.get_int("seed"));
  for (auto t : manifest.get_int_list("eval_ts")) summary.eval_ts.push_back(static_cast<int>(t));
  {
    std::ostringstream env;
    for (const auto& [k, v] : manifest.entries()) {
      if (k.rfind("env.", 0) == 0) env << k << " = " << v << "\n";
    }
    summary.env_echo = env.str();
  }

  std::ifstream csv(dir / "metrics.csv");
  if (!csv) throw std::runtime_error("missing metrics.csv in " + run_dir);
  std::string line;
  if (!std::getline(csv, line)) throw std::runtime_error("empty metrics.csv in " + run_dir);
  const auto header = split_csv_line(line);
  const std::size_t fixed_cols = 6;  // iteration..total
  if (header.size() != fixed_cols + summary.eval_ts.size()) {
    throw std::runtime_error("metrics.csv column count does not match manifest eval_ts in " +
                             run_dir);
  }
  std::vector<double> last_eval;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    const auto cols = split_csv_line(line);
    if (cols.size() < fixed_cols) continue;
    if (cols.size() == fixed_cols + summary.eval_ts.size() && !cols[fixed_cols].empty()) {
      last_eval.clear();
      for (std::size_t i = fixed_cols; i < cols.size(); ++i) {
        last_eval.push_back(parse_double(cols[i], run_dir + ": metrics.csv eval column"));
      }
    }
  }
  if (last_eval.empty()) {
    throw std::runtime_error("no evaluated iteration found in metrics.csv of " + run_dir);
  }
  summary.final_eval = std::move(last_eval);
  return summary;
}

std::vector<std::string> expand_run_dirs(const std::vector<std::string>& dirs) {
  std::vector<std::string> out;
  for (const std::string& d : dirs) {
    if (fs::exists(fs::path(d) / "metrics.csv")) {
      out.push_back(d);
      continue;
    }
    std::vector<std::string> subs;
    if (fs::is_directory(d)) {
      for (const auto& entry : fs::directory_iterator(d)) {
        if (entry.is_directory() && fs::exists(entry.path() / "metrics.csv")) {
          subs.push_back(entry.path().string());
        }
      }
    }
    if (subs.empty()) {
      throw std::runtime_error("no completed runs (metrics.csv) found under " + d);
    }
    std::sort(subs.begin(), subs.end());
    out.insert(out.end(), subs.begin(), subs.end());
  }
  return out;
}

std::string format_eval_table(const EvalResult& result) {
  std::ostringstream out;
  out << "t        mean_delta   stddev   (" << result.students << " students)\n";
  for (std::size_t i = 0; i < result.ts.size(); ++i) {
    out << std::left;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-8d %10.4f %8.4f\n", result.ts[i], result.mean[i],
                  result.stddev[i]);
    out << buf;
  }
  return out.str();
}

std::string compare_runs(const std::vector<std::string>& dirs) {
  if (dirs.size() < 2) {
    throw std::invalid_argument("compare: need at least two run directories");
  }

  // Each argument is one group (one completed experiment: method x seeds).
  struct Group {
    std::string label;
    std::map<std::uint64_t, RunSummary> by_seed;
  };
  std::vector<Group> groups;
  for (const std::string& d : dirs) {
    Group g;
    for (const auto& run_dir : expand_run_dirs({d})) {
      RunSummary s = load_run_summary(run_dir);
      if (g.by_seed.count(s.seed)) {
        throw std::runtime_error("compare: " + d + " holds two runs for seed " +
                                 std::to_string(s.seed));
      }
      if (g.label.empty()) {
        g.label = s.method;
      } else if (g.label != s.method) {
        throw std::runtime_error("compare: " + d + " mixes methods " + g.label + " and " +
                                 s.method);
      }
      g.by_seed.emplace(s.seed, std::move(s));
    }
    groups.push_back(std::move(g));
  }
  // Disambiguate repeated labels (e.g. comparing a run with itself).
  for (std::size_t i = 0; i < groups.size(); ++i) {
    int repeat = 1;
    for (std::size_t j = 0; j < i; ++j) {
      if (groups[j].label == groups[i].label ||
          groups[j].label.rfind(groups[i].label + "#", 0) == 0) {
        ++repeat;
      }
    }
    if (repeat > 1) groups[i].label += "#" + std::to_string(repeat);
  }

  const RunSummary& ref = groups.front().by_seed.begin()->second;
  std::vector<std::uint64_t> seeds;
  for (const auto& [seed, run] : groups.front().by_seed) seeds.push_back(seed);
  for (const auto& g : groups) {
    std::vector<std::uint64_t> s;
    for (const auto& [seed, run] : g.by_seed) {
      s.push_back(seed);
      if (run.env_echo != ref.env_echo) {
        throw std::runtime_error("compare: run " + run.dir +
                                 " used a different environment than " + ref.dir);
      }
      if (run.eval_ts != ref.eval_ts) {
        throw std::runtime_error("compare: run " + run.dir + " evaluated different checkpoints t");
      }
    }
    if (s != seeds) {
      throw std::runtime_error("compare: " + g.label + " covers a different seed set than " +
                               groups.front().label);
    }
  }

  const auto& ts = ref.eval_ts;
  std::ostringstream out;
  out << "methods:";
  for (const auto& g : groups) out << " " << g.label;
  out << "\nseeds:";
  for (auto s : seeds) out << " " << s;
  out << "\n";

  for (std::size_t k = 0; k < ts.size(); ++k) {
    out << "\ndelta at t=" << ts[k] << "\n";
    out << "seed    ";
    for (const auto& g : groups) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), " %16s", g.label.c_str());
      out << buf;
    }
    out << "\n";
    for (auto seed : seeds) {
      char sb[32];
      std::snprintf(sb, sizeof(sb), "%-8llu", static_cast<unsigned long long>(seed));
      out << sb;
      for (auto& g : groups) {
        out << "         " << fmt4(g.by_seed.at(seed).final_eval[k]);
      }
      out << "\n";
    }
    out << "mean    ";
    for (auto& g : groups) {
      double mean = 0.0;
      for (auto seed : seeds) mean += g.by_seed.at(seed).final_eval[k];
      mean /= static_cast<double>(seeds.size());
      out << "         " << fmt4(mean);
    }
    out << "\n";
    for (std::size_t gi = 1; gi < groups.size(); ++gi) {
      int wins = 0, losses = 0, ties = 0;
      for (auto seed : seeds) {
        const double a = groups[gi].by_seed.at(seed).final_eval[k];
        const double b = groups.front().by_seed.at(seed).final_eval[k];
        if (a > b) {
          ++wins;
        } else if (a < b) {
          ++losses;
        } else {
          ++ties;
        }
      }
      out << groups[gi].label << " vs " << groups.front().label << ": " << wins << " wins / "
          << losses << " losses / " << ties << " ties\n";
    }
  }
  return out.str();
}

}  // namespace qrec
