#ifndef CAPGEN_STEMMER_HPP_
#define CAPGEN_STEMMER_HPP_

#include <string>
#include <string_view>

namespace capgen {

/// Porter's suffix-stripping stemmer for lowercase English words. Words of
/// two letters or fewer come back unchanged.
std::string porter_stem(std::string_view word);

}  // namespace capgen

#endif  // CAPGEN_STEMMER_HPP_
