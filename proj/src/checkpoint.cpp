#include "softq/checkpoint.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "softq/errors.hpp"

namespace softq {

namespace {

constexpr const char* kHeader = "softq-checkpoint 1";

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw IoError("checkpoint: float format failure");
  return std::string(buf, ptr);
}

double parse_double(const std::string& token, int line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ParseError("bad float '" + token + "'", line);
  }
  return v;
}

std::vector<int> parse_csv_ints(const std::string& text, int line) {
  std::vector<int> out;
  if (text.empty()) return out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string tok = text.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos);
    int v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      throw ParseError("bad token index '" + tok + "'", line);
    }
    out.push_back(v);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> parts;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) parts.push_back(tok);
  return parts;
}

}  // namespace

std::string render_state(const State& s) {
  std::string out;
  for (std::size_t i = 0; i < s.prompt.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(s.prompt[i]);
  }
  out += '|';
  for (std::size_t i = 0; i < s.generated.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(s.generated[i]);
  }
  return out;
}

State parse_state(const std::string& text) {
  const std::size_t bar = text.find('|');
  if (bar == std::string::npos) {
    throw ParseError("state key missing '|': " + text);
  }
  State s;
  s.prompt = parse_csv_ints(text.substr(0, bar), 0);
  s.generated = parse_csv_ints(text.substr(bar + 1), 0);
  s.terminal = false;
  return s;
}

std::string checkpoint_to_string(const TabularPolicy& policy,
                                 const TabularValue& value,
                                 const Vocab& vocab) {
  std::string out;
  out += kHeader;
  out += '\n';
  out += "vocab " + std::to_string(vocab.size) + ' ' +
         std::to_string(vocab.eos_id) + '\n';
  out += "actions " + std::to_string(policy.action_count()) + '\n';

  std::vector<std::pair<std::string, const std::vector<double>*>> logits;
  logits.reserve(policy.table().size());
  for (const auto& [s, l] : policy.table()) {
    logits.emplace_back(render_state(s), &l);
  }
  std::sort(logits.begin(), logits.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  out += "policy " + std::to_string(logits.size()) + '\n';
  for (const auto& [key, l] : logits) {
    out += key;
    for (double x : *l) {
      out += ' ';
      out += format_double(x);
    }
    out += '\n';
  }

  std::vector<std::pair<std::string, double>> values;
  values.reserve(value.table().size());
  for (const auto& [s, v] : value.table()) {
    values.emplace_back(render_state(s), v);
  }
  std::sort(values.begin(), values.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  out += "value " + std::to_string(values.size()) + '\n';
  for (const auto& [key, v] : values) {
    out += key;
    out += ' ';
    out += format_double(v);
    out += '\n';
  }
  return out;
}

Checkpoint checkpoint_from_string(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  auto next_line = [&]() {
    if (!std::getline(in, line)) {
      throw ParseError("unexpected end of checkpoint", line_no);
    }
    ++line_no;
  };

  next_line();
  if (line != kHeader) {
    throw ParseError("bad or unsupported checkpoint header", line_no);
  }
  next_line();
  auto vocab_parts = split_ws(line);
  if (vocab_parts.size() != 3 || vocab_parts[0] != "vocab") {
    throw ParseError("expected vocab line", line_no);
  }
  Vocab vocab{std::stoi(vocab_parts[1]), std::stoi(vocab_parts[2])};
  next_line();
  auto action_parts = split_ws(line);
  if (action_parts.size() != 2 || action_parts[0] != "actions") {
    throw ParseError("expected actions line", line_no);
  }
  const int n_actions = std::stoi(action_parts[1]);

  Checkpoint checkpoint{vocab, TabularPolicy(n_actions), TabularValue{}};

  next_line();
  auto policy_parts = split_ws(line);
  if (policy_parts.size() != 2 || policy_parts[0] != "policy") {
    throw ParseError("expected policy line", line_no);
  }
  const long n_policy = std::stol(policy_parts[1]);
  for (long i = 0; i < n_policy; ++i) {
    next_line();
    auto parts = split_ws(line);
    if (static_cast<int>(parts.size()) != n_actions + 1) {
      throw ParseError("policy entry has wrong arity", line_no);
    }
    State s = parse_state(parts[0]);
    std::vector<double> l(n_actions);
    for (int a = 0; a < n_actions; ++a) {
      l[a] = parse_double(parts[a + 1], line_no);
    }
    checkpoint.policy.set_logits(s, std::move(l));
  }

  next_line();
  auto value_parts = split_ws(line);
  if (value_parts.size() != 2 || value_parts[0] != "value") {
    throw ParseError("expected value line", line_no);
  }
  const long n_value = std::stol(value_parts[1]);
  for (long i = 0; i < n_value; ++i) {
    next_line();
    auto parts = split_ws(line);
    if (parts.size() != 2) {
      throw ParseError("value entry has wrong arity", line_no);
    }
    checkpoint.value.set(parse_state(parts[0]), parse_double(parts[1], line_no));
  }
  return checkpoint;
}

void save_checkpoint(const TabularPolicy& policy, const TabularValue& value,
                     const Vocab& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << checkpoint_to_string(policy, value, vocab);
  if (!out) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_string(buf.str());
}

void save_solution(const SoftSolution& solution, const Vocab& vocab,
                   const std::string& path) {
  save_checkpoint(to_tabular_policy(solution), to_tabular_value(solution),
                  vocab, path);
}

}  // namespace softq
