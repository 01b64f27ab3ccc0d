#pragma once

#include <stdexcept>
#include <string>

namespace siot {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

#define SIOT_DECLARE_ERROR(Name)             \
    class Name : public Error {              \
      public:                                \
        using Error::Error;                  \
    }

SIOT_DECLARE_ERROR(MessageTooLong);
SIOT_DECLARE_ERROR(EncodingOverflow);
SIOT_DECLARE_ERROR(MalformedPayload);
SIOT_DECLARE_ERROR(InvariantViolation);
SIOT_DECLARE_ERROR(ParseError);
SIOT_DECLARE_ERROR(FrameError);
SIOT_DECLARE_ERROR(ConfigError);
SIOT_DECLARE_ERROR(IoError);

// cloud_store
SIOT_DECLARE_ERROR(Unauthorized);
SIOT_DECLARE_ERROR(IntegrityRejected);
SIOT_DECLARE_ERROR(DuplicateCommand);
SIOT_DECLARE_ERROR(UnknownCommand);
SIOT_DECLARE_ERROR(InvalidTransition);
SIOT_DECLARE_ERROR(StorageError);

#undef SIOT_DECLARE_ERROR

}  // namespace siot
