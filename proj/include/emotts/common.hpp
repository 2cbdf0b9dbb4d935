// Copyright 2026 The emotts Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace emotts {

// Row-major so that "one row per batch item" layouts map directly onto
// contiguous memory.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

enum class ErrorKind { kValidation = 1, kRuntime = 2, kMissingDependency = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error ValidationError(const std::string& what) {
  return Error(ErrorKind::kValidation, what);
}
inline Error RuntimeError(const std::string& what) {
  return Error(ErrorKind::kRuntime, what);
}
inline Error MissingDependency(const std::string& what) {
  return Error(ErrorKind::kMissingDependency, what);
}

inline void Require(bool cond, const std::string& what) {
  if (!cond) throw ValidationError(what);
}

enum class LogLevel { kQuiet = 0, kWarn = 1, kInfo = 2 };

inline LogLevel& GlobalLogLevel() {
  static LogLevel level = LogLevel::kWarn;
  return level;
}

inline void LogWarn(std::string_view msg) {
  if (GlobalLogLevel() >= LogLevel::kWarn) std::cerr << "[warn] " << msg << "\n";
}
inline void LogInfo(std::string_view msg) {
  if (GlobalLogLevel() >= LogLevel::kInfo) std::cerr << "[info] " << msg << "\n";
}

/// Emotion tasks. category4 = {neutral, happy, sad, angry}; the two
/// polarity tasks are binary.
enum class Task { kCategory4, kArousal2, kValence2 };

inline int NumClasses(Task t) { return t == Task::kCategory4 ? 4 : 2; }

inline std::string TaskName(Task t) {
  switch (t) {
    case Task::kCategory4: return "category4";
    case Task::kArousal2: return "arousal2";
    case Task::kValence2: return "valence2";
  }
  return "?";
}

inline Task ParseTask(std::string_view s) {
  if (s == "category4") return Task::kCategory4;
  if (s == "arousal2") return Task::kArousal2;
  if (s == "valence2") return Task::kValence2;
  throw ValidationError("unknown emotion task '" + std::string(s) + "'");
}

inline std::vector<std::string> ClassNames(Task t) {
  switch (t) {
    case Task::kCategory4: return {"neutral", "happy", "sad", "angry"};
    case Task::kArousal2: return {"low", "high"};
    case Task::kValence2: return {"negative", "positive"};
  }
  return {};
}

inline int ClassIndex(Task t, std::string_view name) {
  auto names = ClassNames(t);
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  throw ValidationError("unknown class '" + std::string(name) + "' for task " +
                        TaskName(t));
}

// Category -> polarity mapping used when relabeling category annotations
// for the dimension tasks: happy/angry are high arousal, neutral/happy are
// positive valence.
inline int PolarityOfCategory(Task t, int category) {
  switch (t) {
    case Task::kCategory4: return category;
    case Task::kArousal2: return (category == 1 || category == 3) ? 1 : 0;
    case Task::kValence2: return (category == 0 || category == 1) ? 1 : 0;
  }
  return category;
}

inline bool AllFinite(const Mat& m) { return m.allFinite(); }

}  // namespace emotts
