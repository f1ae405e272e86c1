#include "moa/hashing.hpp"

#include <array>
#include <cstdio>

#include <openssl/sha.h>

namespace moa {

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, SHA256_DIGEST_LENGTH> digest{};
    SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest.data());
    std::string out;
    out.reserve(digest.size() * 2);
    char buf[3];
    for (unsigned char byte : digest) {
        std::snprintf(buf, sizeof buf, "%02x", byte);
        out += buf;
    }
    return out;
}

}  // namespace moa
