#pragma once

#include <cstdio>
#include <cstdlib>
#include <istream>
#include <string>

#include "adlah/errors.hpp"

namespace adlah::textio {

// Hex-float text round-trip helpers. Writing uses printf "%a"; reading goes
// through strtod because istream hexfloat extraction is not dependable.

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

inline double parse_double(const std::string& token, const char* context) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0')
        throw IoError(std::string(context) + ": bad float token '" + token + "'");
    return v;
}

inline double read_double(std::istream& is, const char* context) {
    std::string tok;
    if (!(is >> tok)) throw IoError(std::string(context) + ": truncated float field");
    return parse_double(tok, context);
}

}  // namespace adlah::textio
