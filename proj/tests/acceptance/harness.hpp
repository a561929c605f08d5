#pragma once

#include <functional>
#include <sstream>
#include <string>
#include <vector>

namespace acceptance {

struct Ctx {
  bool ok = true;
  std::vector<std::string> notes;

  void expect(bool cond, const std::string& what) {
    if (!cond) ok = false;
    notes.push_back(std::string(cond ? "    ok   " : "    FAIL ") + what);
  }
  template <typename... Args>
  void note(Args&&... args) {
    std::ostringstream os;
    os << "         ";
    (os << ... << args);
    notes.push_back(os.str());
  }
};

struct Criterion {
  int id;
  std::string title;
  std::function<void(Ctx&)> fn;
};

std::vector<Criterion>& registry();

struct Register {
  Register(int id, std::string title, std::function<void(Ctx&)> fn);
};

#define ACCEPTANCE_CRITERION(id, title)                            \
  static void criterion_##id(::acceptance::Ctx& ctx);              \
  static ::acceptance::Register register_##id(id, title, criterion_##id); \
  static void criterion_##id(::acceptance::Ctx& ctx)

}  // namespace acceptance
