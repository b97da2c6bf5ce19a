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

#ifndef CBDEBUG_TOOLS_CLI_H_
#define CBDEBUG_TOOLS_CLI_H_

#include <iostream>
#include <string>
#include <vector>

namespace cbdebug::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// Runs the `cbdebug` command line. `args` excludes the program name.
// `in` feeds interactive marking in `debug`.
int Main(const std::vector<std::string>& args, std::ostream& out,
         std::ostream& err, std::istream& in = std::cin);

}  // namespace cbdebug::cli

#endif  // CBDEBUG_TOOLS_CLI_H_
