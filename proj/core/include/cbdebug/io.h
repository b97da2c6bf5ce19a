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

#ifndef CBDEBUG_IO_H_
#define CBDEBUG_IO_H_

#include <string>

namespace cbdebug {

// Writes `content` to a sibling temp file, fsyncs, then renames over `path`.
// Readers never observe a half-written file.
void WriteFileAtomic(const std::string& path, const std::string& content);

std::string ReadFile(const std::string& path);

bool FileExists(const std::string& path);

// UTC, second resolution: 2026-01-31T12:00:00Z.
std::string NowIso8601();

}  // namespace cbdebug

#endif  // CBDEBUG_IO_H_
