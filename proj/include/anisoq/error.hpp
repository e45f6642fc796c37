// Copyright 2026 The Anisoq Authors.
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

#include <stdexcept>
#include <string>

namespace anisoq {

// Coarse failure classes, used by the CLI to pick distinct exit codes:
// `validation` covers bad inputs detectable up front (paths, formats,
// parameter ranges), `runtime` covers numerical failures mid-computation.
enum class ErrorClass { validation, runtime };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what)
      : std::runtime_error(what), class_(cls) {}
  ErrorClass error_class() const noexcept { return class_; }

 private:
  ErrorClass class_;
};

#define ANISOQ_DEFINE_ERROR(NAME, CLASS)              \
  struct NAME : Error {                               \
    explicit NAME(const std::string& what)            \
        : Error(ErrorClass::CLASS, #NAME ": " + what) {} \
  }

ANISOQ_DEFINE_ERROR(InvalidArgument, validation);
ANISOQ_DEFINE_ERROR(ZeroNormDatapoint, validation);
ANISOQ_DEFINE_ERROR(InvalidThreshold, validation);
ANISOQ_DEFINE_ERROR(EmptyDataset, validation);
ANISOQ_DEFINE_ERROR(EmptyIndex, validation);
ANISOQ_DEFINE_ERROR(DimensionMismatch, validation);
ANISOQ_DEFINE_ERROR(DimensionNotDivisible, validation);
ANISOQ_DEFINE_ERROR(CodeOutOfRange, validation);
ANISOQ_DEFINE_ERROR(MalformedFile, validation);
ANISOQ_DEFINE_ERROR(InsufficientData, validation);
ANISOQ_DEFINE_ERROR(GroundTruthMismatch, validation);
ANISOQ_DEFINE_ERROR(QuadratureFailure, runtime);
ANISOQ_DEFINE_ERROR(SingularSystem, runtime);

#undef ANISOQ_DEFINE_ERROR

}  // namespace anisoq
