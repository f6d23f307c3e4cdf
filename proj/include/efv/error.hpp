#pragma once

#include <stdexcept>
#include <string>

namespace efv {

// Every failure raised by the library derives from Error and carries a short
// machine-readable kind ("TruncatedRecord", "ShapeMismatch", ...).
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define EFV_DEFINE_ERROR(Name)                                      \
  class Name : public Error {                                       \
   public:                                                          \
    explicit Name(const std::string& what) : Error(#Name, what) {} \
  };

EFV_DEFINE_ERROR(TruncatedRecord)
EFV_DEFINE_ERROR(OutOfBounds)
EFV_DEFINE_ERROR(MalformedLine)
EFV_DEFINE_ERROR(EmptyStream)
EFV_DEFINE_ERROR(InvalidCell)
EFV_DEFINE_ERROR(DimensionMismatch)
EFV_DEFINE_ERROR(EmptyGraph)
EFV_DEFINE_ERROR(NonFiniteLoss)
EFV_DEFINE_ERROR(FormatMismatch)
EFV_DEFINE_ERROR(ShapeMismatch)
EFV_DEFINE_ERROR(ConfigError)
EFV_DEFINE_ERROR(IoError)

#undef EFV_DEFINE_ERROR

}  // namespace efv
