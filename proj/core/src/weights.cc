/*
 * Copyright 2026 The cbdebug Authors.
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

#include <algorithm>
#include <sstream>

#include "cbdebug/error.h"
#include "cbdebug/weights.h"

namespace cbdebug {

Histogram MakeHistogram(const std::vector<double>& values, int bins, double lo,
                        double hi) {
  if (bins < 1) throw ConfigError("bins", "must be >= 1");
  if (!(hi > lo)) hi = lo + 1.0;
  Histogram h;
  h.counts.assign(bins, 0);
  for (int b = 0; b <= bins; ++b) h.edges.push_back(lo + (hi - lo) * b / bins);
  for (double v : values) {
    int b = static_cast<int>((v - lo) / (hi - lo) * bins);
    b = std::clamp(b, 0, bins - 1);
    ++h.counts[b];
  }
  return h;
}

Histogram MakeHistogram(const std::vector<double>& values, int bins) {
  if (values.empty()) return MakeHistogram(values, bins, 0.0, 1.0);
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return MakeHistogram(values, bins, *lo, *hi);
}

std::string Histogram::ToCsv() const {
  std::ostringstream out;
  out.precision(10);
  out << "bin,lo,hi,count\n";
  for (size_t b = 0; b < counts.size(); ++b) {
    out << b << ',' << edges[b] << ',' << edges[b + 1] << ',' << counts[b]
        << '\n';
  }
  return out.str();
}

std::string Histogram::ToText(int width) const {
  int64_t peak = 1;
  for (int64_t c : counts) peak = std::max(peak, c);
  std::ostringstream out;
  char buf[64];
  for (size_t b = 0; b < counts.size(); ++b) {
    std::snprintf(buf, sizeof(buf), "[%9.4f, %9.4f) %7lld ", edges[b],
                  edges[b + 1], static_cast<long long>(counts[b]));
    out << buf
        << std::string(static_cast<size_t>(counts[b] * width / peak), '#')
        << '\n';
  }
  return out.str();
}

}  // namespace cbdebug
