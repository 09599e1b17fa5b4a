// Copyright (c) 2026 BranchForge contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace branchforge {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IndexOutOfRange : Error { using Error::Error; };
struct InfiniteBoundOnIntegerVar : Error { using Error::Error; };
struct InvalidBounds : Error { using Error::Error; };
struct DegenerateParameters : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct SchemaVersionMismatch : Error { using Error::Error; };
struct TooLarge : Error { using Error::Error; };
struct PolicyError : Error { using Error::Error; };
struct NoFractionalCandidates : Error { using Error::Error; };
struct NonOptimalLp : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct MissingLabel : Error { using Error::Error; };
struct EmptyDataset : Error { using Error::Error; };
struct ChecksumMismatch : Error { using Error::Error; };
struct ArchMismatch : Error { using Error::Error; };
struct EmptyPool : Error { using Error::Error; };
struct PoolTooSmall : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

}  // namespace branchforge
