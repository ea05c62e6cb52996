// Copyright (C) 2026 The EPD-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "epd/common.hpp"

namespace epd::sim {

/// Paged cache of fixed-size token blocks. MM caches hold encoded multimodal
/// tokens, KV caches hold attention state. Each owner holds at most one
/// allocation and releases it exactly once.
class BlockManager {
 public:
  enum class Kind { MM, KV };

  BlockManager() = default;
  BlockManager(Kind kind, std::uint32_t block_size, std::uint64_t total_blocks)
      : kind_(kind), block_size_(block_size), total_blocks_(total_blocks) {
    if (block_size_ == 0) throw Error(ErrorKind::InvalidArgument, "block size must be > 0");
    free_list_.reserve(total_blocks_);
    // Hand out low block ids first.
    for (std::uint64_t i = total_blocks_; i > 0; --i) free_list_.push_back(i - 1);
  }

  Kind kind() const { return kind_; }
  std::uint32_t block_size() const { return block_size_; }
  std::uint64_t total_blocks() const { return total_blocks_; }
  std::uint64_t free_blocks() const { return free_list_.size(); }
  std::uint64_t used_blocks() const { return total_blocks_ - free_list_.size(); }
  bool empty() const { return allocated_.empty(); }

  std::uint64_t blocks_for(std::uint64_t tokens) const { return ceil_div(tokens, block_size_); }

  bool can_allocate(std::uint64_t tokens) const { return blocks_for(tokens) <= free_list_.size(); }

  /// Whether `tokens` could ever fit, even with the cache empty.
  bool could_ever_fit(std::uint64_t tokens) const { return blocks_for(tokens) <= total_blocks_; }

  bool allocate(std::uint64_t owner, std::uint64_t tokens) {
    if (allocated_.count(owner) != 0)
      throw std::logic_error("block owner " + std::to_string(owner) + " already holds blocks");
    const std::uint64_t n = blocks_for(tokens);
    if (n > free_list_.size()) return false;
    std::vector<std::uint64_t> blocks(free_list_.end() - static_cast<std::ptrdiff_t>(n),
                                      free_list_.end());
    free_list_.resize(free_list_.size() - n);
    allocated_.emplace(owner, std::move(blocks));
    return true;
  }

  void free(std::uint64_t owner) {
    auto it = allocated_.find(owner);
    if (it == allocated_.end())
      throw std::logic_error("block owner " + std::to_string(owner) + " holds no blocks");
    free_list_.insert(free_list_.end(), it->second.rbegin(), it->second.rend());
    allocated_.erase(it);
  }

  bool holds(std::uint64_t owner) const { return allocated_.count(owner) != 0; }

  const std::vector<std::uint64_t>& blocks_of(std::uint64_t owner) const {
    return allocated_.at(owner);
  }

 private:
  Kind kind_ = Kind::KV;
  std::uint32_t block_size_ = 16;
  std::uint64_t total_blocks_ = 0;
  std::vector<std::uint64_t> free_list_;
  std::map<std::uint64_t, std::vector<std::uint64_t>> allocated_;
};

}  // namespace epd::sim
