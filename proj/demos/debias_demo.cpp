/*
 * Copyright 2026 The fairshot Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Trains three methods on a synthetic corpus whose "fear" instances are
// skewed towards one gender/race combination, then scores them on a
// balanced corpus drawn from the same generator.

#include <iostream>

#include "fairshot/fairshot.hpp"

int main() {
  using namespace fairshot;

  SyntheticSpec gen;
  gen.dimension = 50;
  gen.label_separation = 1.5;
  gen.bias = 0.8;
  const Corpus train = make_synthetic(gen, 7);
  gen.bias = 0.0;
  const Corpus test = make_synthetic(gen, 1007);

  std::vector<SavedReport> rows;
  auto add = [&](MethodSpec spec) {
    const RunResult r = run_method(spec, train, test, 1);
    rows.push_back(saved_report_from_json(result_to_json(r)));
  };

  MethodSpec bac;
  bac.method = MethodId::bac;
  add(bac);

  MethodSpec bacp;
  bacp.method = MethodId::bacp;
  bacp.epsilon_cluster = 1.0;
  add(bacp);

  MethodSpec knn;
  knn.method = MethodId::basav_knn;
  knn.epsilon_cluster = 1.0;
  add(knn);

  write_saved_reports_table(rows, std::cout);
}
