#include "thinkact/action/builtins.hpp"

#include <cctype>
#include <cmath>
#include <ctime>

#include "thinkact/action/registry.hpp"
#include "thinkact/error.hpp"
#include "thinkact/protocol/escape.hpp"
#include "thinkact/util.hpp"

namespace thinkact::action {

namespace {

using protocol::ResultStatus;

class Arithmetic {
 public:
  explicit Arithmetic(std::string_view text) : text_(text) {}

  std::optional<double> run() {
    auto value = expr(0);
    skip();
    if (!value || pos_ != text_.size() || !std::isfinite(*value)) return std::nullopt;
    return value;
  }

 private:
  static constexpr int kMaxDepth = 200;

  void skip() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
  }

  bool eat(char c) {
    skip();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::optional<double> expr(int depth) {
    auto lhs = term(depth);
    while (lhs) {
      if (eat('+')) {
        auto rhs = term(depth);
        if (!rhs) return std::nullopt;
        *lhs += *rhs;
      } else if (eat('-')) {
        auto rhs = term(depth);
        if (!rhs) return std::nullopt;
        *lhs -= *rhs;
      } else {
        break;
      }
    }
    return lhs;
  }

  std::optional<double> term(int depth) {
    auto lhs = factor(depth);
    while (lhs) {
      if (eat('*')) {
        auto rhs = factor(depth);
        if (!rhs) return std::nullopt;
        *lhs *= *rhs;
      } else if (eat('/')) {
        auto rhs = factor(depth);
        if (!rhs || *rhs == 0) return std::nullopt;
        *lhs /= *rhs;
      } else {
        break;
      }
    }
    return lhs;
  }

  std::optional<double> factor(int depth) {
    if (depth > kMaxDepth) return std::nullopt;
    if (eat('-')) {
      auto v = factor(depth + 1);
      if (v) *v = -*v;
      return v;
    }
    if (eat('+')) return factor(depth + 1);
    if (eat('(')) {
      auto v = expr(depth + 1);
      if (!v || !eat(')')) return std::nullopt;
      return v;
    }
    return number();
  }

  std::optional<double> number() {
    skip();
    const std::size_t start = pos_;
    bool digits = false;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
      digits = true;
    }
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      bool frac = false;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        ++pos_;
        frac = true;
      }
      if (!frac) return std::nullopt;
      digits = true;
    }
    if (!digits) return std::nullopt;
    return parse_number(text_.substr(start, pos_ - start));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

const std::string* string_arg(const protocol::Args& args, std::string_view key) {
  const auto it = args.find(key);
  return it == args.end() ? nullptr : std::get_if<std::string>(&it->second);
}

BuiltinOutput error(std::string message) { return BuiltinOutput{ResultStatus::kError, std::move(message)}; }

}  // namespace

Clock system_clock() {
  return [] { return std::chrono::system_clock::now(); };
}

Clock fixed_clock(std::string_view iso) {
  const auto tp = parse_iso8601(iso);
  if (!tp) throw Error(Errc::kInvalidArgument, "bad timestamp '" + std::string(iso) + "'");
  return [t = *tp] { return t; };
}

std::string format_iso8601(std::chrono::system_clock::time_point tp) {
  const std::time_t secs = std::chrono::system_clock::to_time_t(std::chrono::floor<std::chrono::seconds>(tp));
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::optional<std::chrono::system_clock::time_point> parse_iso8601(std::string_view text) {
  std::tm tm{};
  const std::string s(text);
  const char* end = strptime(s.c_str(), "%Y-%m-%dT%H:%M:%SZ", &tm);
  if (end == nullptr || *end != '\0') return std::nullopt;
  return std::chrono::system_clock::from_time_t(timegm(&tm));
}

std::optional<double> evaluate_arithmetic(std::string_view expr) { return Arithmetic(expr).run(); }

BuiltinOutput run_builtin(std::string_view name, const protocol::Args& args, BuiltinEnv& env) {
  if (name == kClockNow) {
    if (!args.empty()) return error("clock_now takes no arguments");
    return BuiltinOutput{ResultStatus::kOk, format_iso8601(env.clock ? env.clock() : std::chrono::system_clock::now())};
  }
  if (name == kCalcEval) {
    const auto* expr = string_arg(args, "expr");
    if (expr == nullptr || args.size() != 1) return error("calc_eval needs a string 'expr'");
    const auto value = evaluate_arithmetic(*expr);
    if (!value) return error("cannot evaluate '" + *expr + "'");
    return BuiltinOutput{ResultStatus::kOk, format_number(*value)};
  }
  if (name == kMemGet || name == kMemPut) {
    if (env.store == nullptr) return error("no episode memory attached");
    const auto* key = string_arg(args, "key");
    if (key == nullptr) return error(std::string(name) + " needs a string 'key'");
    if (name == kMemGet) {
      if (args.size() != 1) return error("mem_get takes only 'key'");
      const auto* entry = env.store->find_global(*key);
      if (entry == nullptr) return error("no memory entry '" + *key + "'");
      return BuiltinOutput{ResultStatus::kOk, protocol::unescape(entry->value)};
    }
    const auto* value = string_arg(args, "value");
    if (value == nullptr || args.size() != 2) return error("mem_put needs string 'key' and 'value'");
    try {
      env.store->record(context::ContextEntry{*key, protocol::neutralize(*value), protocol::Scope::kGlobal, env.call_id,
                                              env.turn_index});
    } catch (const Error& e) {
      return error(e.what());
    }
    return BuiltinOutput{ResultStatus::kOk, "stored"};
  }
  throw Error(Errc::kUnknownBuiltin, std::string(name));
}

protocol::ActionResult eval_builtin(std::string_view name, const protocol::Args& args, BuiltinEnv& env) {
  auto out = run_builtin(name, args, env);
  return protocol::ActionResult{env.call_id, out.status, protocol::neutralize(out.payload), {}};
}

}  // namespace thinkact::action
