#pragma once

#include <stdexcept>
#include <string>

namespace dgsct {

// Base class for every failure this library reports.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class NonFiniteInput : public Error {
public:
    using Error::Error;
};

class AxisOutOfRange : public Error {
public:
    using Error::Error;
};

class EvenKernel : public Error {
public:
    using Error::Error;
};

class NonScalarRoot : public Error {
public:
    using Error::Error;
};

class EmptySequence : public Error {
public:
    using Error::Error;
};

class TimestepMismatch : public Error {
public:
    using Error::Error;
};

class IndivisibleExtent : public Error {
public:
    using Error::Error;
};

class NormalizationError : public Error {
public:
    using Error::Error;
};

class NonPositiveTemperature : public Error {
public:
    using Error::Error;
};

class InvalidConfig : public Error {
public:
    using Error::Error;
};

class DivergenceDetected : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace dgsct
