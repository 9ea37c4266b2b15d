#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "itd/datetime.hpp"

namespace itd {

enum class ScenarioKind { DataExfiltration, Masquerade, JobHunting };

const char* scenario_kind_name(ScenarioKind k);
ScenarioKind scenario_kind_from_name(const std::string& name);

struct PlantedScenario {
  int user_index = 0;
  int day_begin = 0;  // inclusive day offsets from plan start
  int day_end = 0;    // inclusive
  ScenarioKind kind = ScenarioKind::DataExfiltration;
};

// Synthetic corpus plan. Normal behavior is drawn from per-user seeded rate
// processes concentrated in work hours on the user's own pc; planted
// scenarios burst several indicators far outside the training distribution.
struct ScenarioPlan {
  int n_users = 20;
  int n_days = 120;
  Timestamp start_ts = 1262563200;  // 2010-01-04, a Monday
  double rate_multiplier_lo = 0.7;
  double rate_multiplier_hi = 1.4;
  double train_fraction = 0.7;  // used to validate scenario placement
  std::vector<PlantedScenario> scenarios;

  static ScenarioPlan default_plan();
};

struct SynthResult {
  std::vector<std::string> csv_paths;
  std::string manifest_path;
  std::size_t total_events = 0;
};

// Emits logon/device/file/email/http CSVs (parseable with the default column
// maps) plus a ground-truth manifest listing every malicious (user, day) and
// exact per-user per-kind event counts. Byte-identical for a fixed seed.
SynthResult synth_generate(const ScenarioPlan& plan, std::uint64_t seed,
                           const std::string& out_dir);

}  // namespace itd
