/*
 * Copyright 2026 The dpobench Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Generated by tests/oracles/make_oracles.py. Do not edit.
#pragma once
#include <array>
#include <string_view>
#include <utility>
namespace oracle {
inline constexpr std::array<std::string_view, 8> kSplitTrain = {"r06", "r02", "r09", "r04", "r08", "r07", "r01", "r03"};
inline constexpr std::array<std::string_view, 2> kSplitTest = {"r00", "r05"};
inline constexpr std::array<std::string_view, 2> kSplitQueries = {"r05", "r00"};
inline constexpr std::array<std::string_view, 8> kSplitDocs = {"r07", "r01", "r02", "r09", "r03", "r04", "r06", "r08"};
inline constexpr double kPlainResponseLogprob = -9.857774879209042;
inline constexpr int kPlainPromptTokens = 14;
inline constexpr double kTableLatents[5][3] = {
  {1.0, 0.0, 0.5},
  {0.2, 1.0, -0.3},
  {-0.7, 0.4, 1.0},
  {0.9, -0.8, 0.1},
  {-0.3, -0.6, -0.9},
};
inline constexpr double kUtilityTable[5][5] = {
  {-0.9413755384972873, 0.164355025479951, 0.4842522114779628, -0.8198773203011915, 0.894745364183356},
  {0.164355025479951, -0.9413755384972874, 0.2991520181924977, 0.8516447632920813, 0.7180885873503798},
  {0.4842522114779628, 0.2991520181924977, -0.9413755384972874, 0.8729378348361931, 0.9121183673332568},
  {-0.8198773203011915, 0.8516447632920813, 0.8729378348361931, -0.9413755384972874, 0.07292075349003016},
  {0.894745364183356, 0.7180885873503798, 0.9121183673332568, 0.07292075349003016, -0.9413755384972874},
};
inline constexpr double kDpoTable[5][5] = {
  {-2.2316562192688205, -0.5252451500801882, -0.28995095677742144, -1.9914778873761079, -0.12536635071069252},
  {-0.5252451500801882, -2.2316562192688196, -0.4121949435796529, -0.13729370125395404, -0.18128070740951374},
  {-0.28995095677742144, -0.4121949435796535, -2.2316562192688205, -0.13127442760586125, -0.12083923061674977},
  {-1.9914778873761103, -0.13729370125395418, -0.13127442760586133, -2.2316562192688205, -0.6144725055212048},
  {-0.12536635071069263, -0.18128070740951388, -0.12083923061674977, -0.6144725055212048, -2.2316562192688196},
};
inline constexpr double kLogSigmoidOne = -0.31326168751822286;
inline constexpr double kDcgThree = 1.1475716579722763;
inline constexpr double kNdcgReversed4 = 0.692009586855742;
inline constexpr double kCosine122_212 = 0.8888888888888888;
inline constexpr double kSoftplusMinus10 = 4.539889921686465e-05;
inline constexpr double kTinyAdapterScore = 1.8;
inline constexpr double kUcbTwoMembers = 0.682842712474619;
inline constexpr std::array<std::pair<std::string_view, std::string_view>, 12> kSeedRound = {{
  {"q2", "d5"},
  {"q2", "d4"},
  {"q2", "d6"},
  {"q2", "d1"},
  {"q1", "d2"},
  {"q1", "d3"},
  {"q1", "d1"},
  {"q1", "d7"},
  {"q0", "d0"},
  {"q0", "d1"},
  {"q0", "d3"},
  {"q0", "d7"},
}};
inline constexpr double kSeedRoundQueryAngles[3] = {0.1, 1.3, 2.9};
inline constexpr double kSeedRoundDocAngles[10] = {0.05, 0.66, 1.27, 1.8800000000000001, 2.4899999999999998, 3.0999999999999996, 3.71, 4.319999999999999, 4.93, 5.54};
}  // namespace oracle
