/* Copyright 2026 The MVFormer Kit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <stdexcept>
#include <string>

namespace mvformer {

// Base of every error raised by the library. Subclasses name the failure
// category so callers (the CLI in particular) can map them to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class SplitError : public Error {
 public:
  using Error::Error;
};

class ConcatError : public Error {
 public:
  using Error::Error;
};

class BroadcastError : public Error {
 public:
  using Error::Error;
};

// Reduction over an empty or single-element slice where statistics are
// meaningless (BN with one sample, IN on a 1x1 plane, LN with one channel).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class BackwardError : public Error {
 public:
  using Error::Error;
};

class MissingNodeError : public BackwardError {
 public:
  using BackwardError::BackwardError;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class IntegrityError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mvformer
