#include "slicenet/error.hpp"

namespace slicenet {

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kUsage:
    case ErrorKind::kBudget:
      return 2;
    case ErrorKind::kData:
    case ErrorKind::kIo:
    case ErrorKind::kDimension:
      return 3;
    case ErrorKind::kNumeric:
      return 4;
  }
  return 1;
}

}  // namespace slicenet
