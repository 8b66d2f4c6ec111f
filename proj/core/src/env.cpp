#include "acelab/env.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace acelab {

void TaskSpec::validate() const {
  if (modulus < 2) throw std::invalid_argument("TaskSpec: modulus must be >= 2");
  if (target < 0 || target >= modulus)
    throw std::invalid_argument("TaskSpec: target must be in [0, modulus)");
  if (vocab_size < 2) throw std::invalid_argument("TaskSpec: vocab_size must be >= 2");
  if (length < 1) throw std::invalid_argument("TaskSpec: length must be >= 1");
  if (prompt_class < 0) throw std::invalid_argument("TaskSpec: prompt_class must be >= 0");
}

VerdictRecord verify(const TaskSpec& task, std::span<const int> tokens) {
  task.validate();
  if (static_cast<int>(tokens.size()) != task.length)
    throw std::invalid_argument("verify: expected " + std::to_string(task.length) +
                                " tokens, got " + std::to_string(tokens.size()));
  long long sum = 0;
  for (int t : tokens) {
    if (t < 0 || t >= task.vocab_size)
      throw std::invalid_argument("verify: token value out of range");
    sum += t;
  }
  return {sum % task.modulus == task.target ? 1 : 0};
}

long long count_correct(const TaskSpec& task, std::size_t cap) {
  task.validate();
  std::size_t total = 1;
  for (int i = 0; i < task.length; ++i) {
    if (total > cap / static_cast<std::size_t>(task.vocab_size))
      throw EnumerationCapError(cap + 1, cap);
    total *= static_cast<std::size_t>(task.vocab_size);
  }
  long long correct = 0;
  std::vector<int> tokens(task.length, 0);
  for (std::size_t n = 0; n < total; ++n) {
    correct += verify(task, tokens).reward;
    for (int pos = task.length - 1; pos >= 0; --pos) {
      if (++tokens[pos] < task.vocab_size) break;
      tokens[pos] = 0;
    }
  }
  return correct;
}

double exact_pass_rate(const TaskSpec& task, const PolicyParams& params, std::size_t cap) {
  task.validate();
  if (task.vocab_size != params.vocab_size())
    throw std::invalid_argument("exact_pass_rate: task vocab does not match policy");
  double mass = 0.0;
  for (const auto& outcome : enumerate_sequences(params, task.prompt_class, task.length, cap)) {
    if (verify(task, outcome.tokens).reward == 1) mass += outcome.probability;
  }
  return std::clamp(mass, 0.0, 1.0);
}

std::vector<TaskSpec> parse_tasks(std::istream& in) {
  std::vector<TaskSpec> tasks;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string kind;
    if (!(fields >> kind)) continue;  // blank line
    if (kind != "mod_sum")
      throw std::invalid_argument("tasks line " + std::to_string(line_no) +
                                  ": unknown kind '" + kind + "'");
    TaskSpec task;
    if (!(fields >> task.modulus >> task.target >> task.vocab_size >> task.length))
      throw std::invalid_argument("tasks line " + std::to_string(line_no) +
                                  ": expected 'mod_sum M t V L'");
    task.prompt_class = static_cast<int>(tasks.size());
    task.validate();
    tasks.push_back(task);
  }
  return tasks;
}

std::vector<TaskSpec> load_tasks(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_tasks: cannot open " + path);
  return parse_tasks(in);
}

void save_tasks(const std::vector<TaskSpec>& tasks, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_tasks: cannot open " + path);
  for (const auto& t : tasks) {
    out << "mod_sum " << t.modulus << ' ' << t.target << ' ' << t.vocab_size << ' '
        << t.length << '\n';
  }
}

PolicyParams make_policy_for(const std::vector<TaskSpec>& tasks) {
  if (tasks.empty()) throw std::invalid_argument("make_policy_for: empty dataset");
  int vocab = tasks.front().vocab_size;
  int max_len = 0;
  int classes = 0;
  for (const auto& t : tasks) {
    if (t.vocab_size != vocab)
      throw std::invalid_argument("make_policy_for: tasks must share one vocabulary");
    max_len = std::max(max_len, t.length);
    classes = std::max(classes, t.prompt_class + 1);
  }
  return PolicyParams(classes, max_len, vocab);
}

}  // namespace acelab
