#pragma once

// Runs the vseg binary through every subcommand on a tiny phantom set.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vseg/manifest.hpp"

namespace clitest {

namespace fs = std::filesystem;

inline std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

/// Runs `VSEG_BINARY args` with stdout/stderr captured under `log_dir`.
inline Result run(const std::string& args, const fs::path& log_dir) {
  fs::create_directories(log_dir);
  const fs::path o = log_dir / "stdout.txt", e = log_dir / "stderr.txt";
  const std::string cmd = std::string("'") + VSEG_BINARY + "' " + args + " > '" + o.string() + "' 2> '" + e.string() + "'";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(o);
  r.err = slurp(e);
  return r;
}

struct PipelineRun {
  std::string failed;  // command that exited non-zero, empty on success
  std::string failed_stderr;
  std::vector<std::string> subcommands;
  std::map<std::string, std::string> files;  // relative path -> bytes, manifests excluded
  std::map<std::string, std::string> stdout_by_step;
  std::vector<fs::path> manifests;
};

/// Every subcommand once, in pipeline order, writing below `dir`.
inline PipelineRun run_pipeline(const fs::path& dir, int threads) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string d = "'" + dir.string() + "/";
  const std::string t = " --threads " + std::to_string(threads) + " ";
  std::vector<std::pair<std::string, std::string>> steps{
      {"phantom", "--seed 11" + t + "phantom --out " + d + "cases' --count 4 --size 32"},
      {"split", "--seed 5" + t + "split --ids-dir " + d + "cases' --counts 2,1,1 --out " + d + "split.json'"},
      {"resample", t + "resample --in " + d + "cases/phantom_000.vseg' --out " + d + "res.vseg' --spacing-mm 3"},
      {"resample", t + "resample --in " + d + "cases/phantom_000_mask.vseg' --out " + d + "res_mask.vseg' --spacing-mm 3"},
      {"train", "--seed 7" + t + "train --arch unet2d4 --base-channels 2 --iterations 4 --batch 2 --tile 92 " +
                    "--validation-interval 2 --cases " + d + "cases' --split " + d + "split.json' --out " + d +
                    "net.ckpt'"},
  };
  fs::create_directories(dir / "probs");
  for (int i = 0; i < 4; ++i) {
    const std::string id = "phantom_00" + std::to_string(i);
    for (const char* axis : {"transversal", "coronal", "sagittal"}) {
      steps.push_back({"infer", t + "infer --arch unet2d4 --base-channels 2 --checkpoint " + d + "net.ckpt' --in " + d +
                                    "cases/" + id + ".vseg' --axis " + axis + " --out " + d + "probs/" + id + "_" +
                                    axis + ".vseg'"});
    }
  }
  const std::string three = " --transversal " + d + "probs/phantom_003_transversal.vseg' --coronal " + d +
                            "probs/phantom_003_coronal.vseg' --sagittal " + d + "probs/phantom_003_sagittal.vseg'";
  steps.push_back({"fuse", t + "fuse --mode mean" + three + " --out " + d + "fused_mean.vseg'"});
  steps.push_back({"fuse", "--seed 3" + t + "fuse --mode train --prob-dir " + d + "probs' --cases " + d +
                               "cases' --split " + d + "split.json' --iterations 3 --batch 1 --tile 8 --out " + d +
                               "fusion.ckpt'"});
  steps.push_back({"fuse", t + "fuse --mode cnn --checkpoint " + d + "fusion.ckpt'" + three + " --out " + d +
                               "fused_cnn.vseg'"});
  steps.push_back({"postprocess", t + "postprocess --in " + d + "fused_cnn.vseg' --out " + d + "post.vseg'"});
  const std::string m = d + "cases/phantom_00";
  steps.push_back({"evaluate", t + "evaluate --seg " + m + "0_mask.vseg' --ref " + m + "1_mask.vseg' --seg " + m +
                                   "1_mask.vseg' --ref " + m + "2_mask.vseg' --case-id a --case-id b --runtime-s 1 " +
                                   "--out " + d + "eval_a.csv'"});
  steps.push_back({"evaluate", t + "evaluate --seg " + m + "0_mask.vseg' --ref " + m + "0_mask.vseg' --seg " + m +
                                   "1_mask.vseg' --ref " + m + "1_mask.vseg' --case-id a --case-id b --runtime-s 1 " +
                                   "--out " + d + "eval_b.csv'"});
  steps.push_back({"compare", t + "compare --a " + d + "eval_a.csv' --b " + d + "eval_b.csv' --metric voe_pct --out " +
                                  d + "compare.csv'"});
  steps.push_back({"plan", t + "plan --table3 --csv --out " + d + "table3.csv'"});
  steps.push_back({"plan", t + "plan --arch unet3d --tile 20 --out " + d + "plan3d.txt'"});
  steps.push_back({"gradcheck", "--seed 2" + t + "gradcheck --seeds 2 --out " + d + "grad.csv'"});

  PipelineRun pr;
  int k = 0;
  for (const auto& [name, args] : steps) {
    const Result r = run(args, dir / "logs" / std::to_string(k));
    pr.stdout_by_step[std::to_string(k) + ":" + name] = r.out;
    ++k;
    pr.subcommands.push_back(name);
    if (r.code != 0) {
      pr.failed = args;
      pr.failed_stderr = r.err;
      return pr;
    }
  }
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), dir).string();
    if (rel.rfind("logs/", 0) == 0) continue;
    if (rel.size() > 14 && rel.compare(rel.size() - 14, 14, ".manifest.json") == 0) {
      pr.manifests.push_back(e.path());
      continue;
    }
    pr.files[rel] = slurp(e.path());
  }
  return pr;
}

/// Empty when every manifest's checksums match the files it lists.
inline std::string check_manifests(const PipelineRun& pr) {
  for (const auto& p : pr.manifests) {
    const auto j = nlohmann::json::parse(slurp(p));
    for (const auto& out : j.at("outputs")) {
      const std::string path = out.get<std::string>();
      if (j.at("checksums").at(path).get<std::string>() != vseg::sha256_file(path)) {
        return p.string() + ": checksum mismatch for " + path;
      }
    }
    if (!j.contains("timing") || !j.contains("seed") || !j.contains("subcommand")) return p.string() + ": missing fields";
  }
  return {};
}

/// First difference between two runs' outputs, empty if byte-identical.
inline std::string diff_runs(const PipelineRun& a, const PipelineRun& b) {
  if (a.files.size() != b.files.size()) return "different file sets";
  for (const auto& [rel, bytes] : a.files) {
    const auto it = b.files.find(rel);
    if (it == b.files.end()) return "missing " + rel;
    if (it->second != bytes) return "differs: " + rel;
  }
  for (const auto& [step, out] : a.stdout_by_step) {
    if (b.stdout_by_step.at(step) != out) return "stdout differs: " + step;
  }
  return {};
}

}  // namespace clitest
