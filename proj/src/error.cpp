/*
 * Copyright 2026 The cemx Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "cemx/error.hpp"

namespace cemx {

const char* error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidDims: return "InvalidDims";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::KernelFormatError: return "KernelFormatError";
    case ErrorCode::SingularKernel: return "SingularKernel";
    case ErrorCode::OracleTooLarge: return "OracleTooLarge";
    case ErrorCode::GraphShapeError: return "GraphShapeError";
    case ErrorCode::EmptyRegion: return "EmptyRegion";
    case ErrorCode::InvalidParam: return "InvalidParam";
    case ErrorCode::CalibrationError: return "CalibrationError";
    case ErrorCode::EstimationError: return "EstimationError";
    case ErrorCode::Busy: return "Busy";
    case ErrorCode::NothingToUndo: return "NothingToUndo";
    case ErrorCode::NotFound: return "NotFound";
  }
  return "Unknown";
}

}  // namespace cemx
