#pragma once

#include <stdexcept>
#include <string>

namespace chainqa {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent corpus input. Messages carry "<file>:<line>: " when known.
class CorpusError : public Error {
public:
    using Error::Error;
};

/// Failure talking to an external model service. The message names the service.
class GatewayError : public Error {
public:
    using Error::Error;
};

} // namespace chainqa
