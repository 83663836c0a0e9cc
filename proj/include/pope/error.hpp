#pragma once

#include <stdexcept>
#include <string>

namespace pope {

enum class Errc : int {
  ok = 0,
  config = 2,    // bad arguments / flags / workload spec
  session = 3,   // transport or peer failure mid-session
  encoding = 10, // label overflow, malformed frame payloads
  integrity = 11, // authenticated decryption failure, inconsistent facts
  protocol = 12, // peer violated the message contract
  capacity = 13, // client asked to hold more than its working-set bound
  io = 14,       // file or socket plumbing
  state = 15,    // structural invariant broken (tree, order state)
};

struct Error : std::runtime_error {
  Errc code;
  Error(Errc c, const std::string& what) : std::runtime_error(what), code(c) {}
};

[[noreturn]] inline void fail(Errc c, const std::string& what) { throw Error(c, what); }

} // namespace pope
