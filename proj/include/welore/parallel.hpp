// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace welore {

/// Worker count from WELORE_THREADS (default 1).
std::size_t thread_count();

/// Runs fn(i) for i in [0, n) on up to thread_count() threads. Each index
/// runs exactly once; the first exception thrown is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace welore
