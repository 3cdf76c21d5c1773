#ifndef SOFTQ_CHECKPOINT_HPP_
#define SOFTQ_CHECKPOINT_HPP_

#include <string>

#include "softq/oracle.hpp"

namespace softq {

struct Checkpoint {
  Vocab vocab;
  TabularPolicy policy;
  TabularValue value;
};

// Line-delimited text with states rendered as comma-joined token indices,
// prompt and generated separated by '|'. Entries are sorted by rendered key
// and floats printed in shortest round-trip form, so load followed by save is
// byte-identical.
std::string checkpoint_to_string(const TabularPolicy& policy,
                                 const TabularValue& value,
                                 const Vocab& vocab);
Checkpoint checkpoint_from_string(const std::string& text);

void save_checkpoint(const TabularPolicy& policy, const TabularValue& value,
                     const Vocab& vocab, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// SoftSolution rendered in the same format: logits hold log pi*, values V*.
void save_solution(const SoftSolution& solution, const Vocab& vocab,
                   const std::string& path);

std::string render_state(const State& s);
State parse_state(const std::string& text);

}  // namespace softq

#endif  // SOFTQ_CHECKPOINT_HPP_
