#include "unmtlab/common.hpp"

#include <sstream>

namespace unmtlab {

std::string join_tokens(const RawSentence& s) {
  std::string out;
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ' ';
    out += s[i];
  }
  return out;
}

RawSentence split_tokens(const std::string& line) {
  RawSentence out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

}  // namespace unmtlab
