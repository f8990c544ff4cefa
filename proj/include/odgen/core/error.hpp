#pragma once

#include <cstdarg>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace odgen {

// Base class for all errors raised by the library. Stage runners map these
// to exit code 2 (precondition failure) at the CLI boundary.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define ODGEN_DEFINE_ERROR(Name)             \
    struct Name : ::odgen::Error {           \
        using ::odgen::Error::Error;         \
    }

ODGEN_DEFINE_ERROR(EmptyBoxError);           // box/image intersection has zero area
ODGEN_DEFINE_ERROR(MalformedLabelError);     // bad arity / non-numeric / out-of-range label field
ODGEN_DEFINE_ERROR(MissingImageError);       // label file without a matching image
ODGEN_DEFINE_ERROR(IoError);                 // unreadable/unwritable path
ODGEN_DEFINE_ERROR(InsufficientDataError);   // not enough samples to fit statistics
ODGEN_DEFINE_ERROR(OverflowError);           // more annotations than condition slots
ODGEN_DEFINE_ERROR(PoolMissError);           // foreground pool lacks a category
ODGEN_DEFINE_ERROR(BadEmbedderShapeError);   // text embedder returned wrong shape
ODGEN_DEFINE_ERROR(ShapeMismatchError);      // tensor shape disagreement
ODGEN_DEFINE_ERROR(BadScheduleError);        // invalid noise schedule parameters
ODGEN_DEFINE_ERROR(DivergenceError);         // training loss became non-finite
ODGEN_DEFINE_ERROR(ClassMissingError);       // a patch split lacks one class
ODGEN_DEFINE_ERROR(MissingArtifactError);    // upstream stage output absent
ODGEN_DEFINE_ERROR(StaleUpstreamError);      // upstream stage output changed since recorded
ODGEN_DEFINE_ERROR(ConfigError);             // malformed or inconsistent configuration

#undef ODGEN_DEFINE_ERROR

inline std::string strfmt(const char* fmt, ...) {
    va_list args;
    va_start(args, fmt);
    char buf[1024];
    vsnprintf(buf, sizeof(buf), fmt, args);
    va_end(args);
    return std::string(buf);
}

}  // namespace odgen
