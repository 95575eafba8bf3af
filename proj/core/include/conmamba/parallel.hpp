// Copyright 2026 The conmamba Authors
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

#include <cstddef>

namespace conmamba {

/// Worker threads used by intra-op loops. Results never depend on this
/// value: every parallel loop writes disjoint outputs with a fixed
/// per-element reduction order.
void set_num_threads(int n);
int num_threads();

/// Thread count from the CONMAMBA_THREADS environment variable, or
/// `fallback` when it is unset or malformed.
int threads_from_env(int fallback);

}  // namespace conmamba
