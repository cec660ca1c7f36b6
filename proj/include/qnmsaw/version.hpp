#ifndef QNMSAW_VERSION_HPP
#define QNMSAW_VERSION_HPP

namespace qnmsaw {

inline constexpr const char* kVersion = "1.0.0";

} // namespace qnmsaw

#endif // QNMSAW_VERSION_HPP
