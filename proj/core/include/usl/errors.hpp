// Copyright 2026 The USL Authors.
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

#ifndef USL_ERRORS_HPP_
#define USL_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace usl {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller-supplied parameter is outside its documented range.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Input data is malformed, inconsistent, or unreadable.
class DataError : public Error {
 public:
  using Error::Error;
};

// File could not be opened, read, or written.
class IoError : public DataError {
 public:
  using DataError::DataError;
};

// A computation produced a non-finite value or could not make progress.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace usl

#endif  // USL_ERRORS_HPP_
