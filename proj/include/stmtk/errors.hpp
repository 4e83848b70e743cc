#ifndef STMTK_ERRORS_HPP
#define STMTK_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace stmtk {

// Base class for all recoverable pipeline errors. Subcommands map these to
// exit code 2 (input/validation) or 3 (runtime) depending on the type.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class InputError : public Error {
public:
    using Error::Error;
};

#define STMTK_DEFINE_ERROR(NAME, BASE)                       \
    class NAME : public BASE {                               \
    public:                                                  \
        explicit NAME(const std::string& msg)                \
            : BASE(std::string(#NAME) + ": " + msg) {}       \
    }

STMTK_DEFINE_ERROR(OutOfBounds, InputError);
STMTK_DEFINE_ERROR(EmptySource, InputError);
STMTK_DEFINE_ERROR(InconsistentFrameSize, InputError);
STMTK_DEFINE_ERROR(TileTooLarge, InputError);
STMTK_DEFINE_ERROR(TooFewFrames, InputError);
STMTK_DEFINE_ERROR(ZeroMatrix, InputError);
STMTK_DEFINE_ERROR(RankDeficient, Error);
STMTK_DEFINE_ERROR(ShapeMismatch, InputError);
STMTK_DEFINE_ERROR(EmptyInput, InputError);
STMTK_DEFINE_ERROR(BadProportions, InputError);
STMTK_DEFINE_ERROR(DivergenceDetected, Error);
STMTK_DEFINE_ERROR(OutOfCalibrationRange, InputError);
STMTK_DEFINE_ERROR(NoOverlap, InputError);
STMTK_DEFINE_ERROR(SpecOutOfRange, InputError);
STMTK_DEFINE_ERROR(InvalidArgument, InputError);
STMTK_DEFINE_ERROR(IoError, Error);
STMTK_DEFINE_ERROR(ParseError, InputError);

#undef STMTK_DEFINE_ERROR

}  // namespace stmtk

#endif
