#include "textfuse/op_counter.hpp"

namespace textfuse::profile {
namespace {
thread_local OpCounter* t_counter = nullptr;
thread_local std::string_view t_label{};
}  // namespace

OpCounter::OpCounter() : previous_(t_counter) { t_counter = this; }

OpCounter::~OpCounter() { t_counter = previous_; }

void OpCounter::add(std::uint64_t madds) {
  total_ += madds;
  auto it = by_label_.find(t_label);
  if (it == by_label_.end()) {
    by_label_.emplace(std::string(t_label), madds);
  } else {
    it->second += madds;
  }
}

std::uint64_t OpCounter::labeled(std::string_view label) const {
  auto it = by_label_.find(label);
  return it == by_label_.end() ? 0 : it->second;
}

ScopedLabel::ScopedLabel(std::string_view label) : previous_(t_label) { t_label = label; }

ScopedLabel::~ScopedLabel() { t_label = previous_; }

void tally(std::uint64_t madds) {
  if (t_counter != nullptr) t_counter->add(madds);
}

}  // namespace textfuse::profile
