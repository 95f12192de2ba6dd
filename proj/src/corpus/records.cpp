#include <chrono>
#include <string>

#include "cxrl/corpus.hpp"
#include "cxrl/errors.hpp"

namespace cxrl::corpus {

std::string_view to_string(View view) {
  switch (view) {
    case View::frontal_ap: return "frontal_ap";
    case View::frontal_pa: return "frontal_pa";
    case View::lateral: return "lateral";
    case View::other: break;
  }
  return "other";
}

View parse_view(std::string_view text) {
  if (text == "frontal_ap") return View::frontal_ap;
  if (text == "frontal_pa") return View::frontal_pa;
  if (text == "lateral") return View::lateral;
  if (text == "other") return View::other;
  throw DataError("unknown image view '" + std::string(text) + "'");
}

bool StudyRecord::has_frontal() const {
  for (const auto& img : images) {
    if (is_frontal(img.view)) return true;
  }
  return false;
}

namespace {

class Cursor {
 public:
  explicit Cursor(std::string_view s) : s_(s) {}

  bool done() const { return i_ == s_.size(); }
  char peek() const { return done() ? '\0' : s_[i_]; }

  int digits(std::size_t count) {
    int v = 0;
    for (std::size_t k = 0; k < count; ++k) {
      if (done() || s_[i_] < '0' || s_[i_] > '9') fail();
      v = v * 10 + (s_[i_++] - '0');
    }
    return v;
  }

  void expect(char c) {
    if (peek() != c) fail();
    ++i_;
  }

  bool accept(char c) {
    if (peek() != c) return false;
    ++i_;
    return true;
  }

  [[noreturn]] void fail() const { throw DataError("invalid ISO-8601 timestamp '" + std::string(s_) + "'"); }

 private:
  std::string_view s_;
  std::size_t i_ = 0;
};

}  // namespace

Timestamp parse_timestamp(std::string_view text) {
  using namespace std::chrono;
  Cursor c(text);
  const int y = c.digits(4);
  c.expect('-');
  const int mo = c.digits(2);
  c.expect('-');
  const int d = c.digits(2);
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) c.fail();

  std::int64_t micros = 0;
  if (c.accept('T') || c.accept(' ')) {
    const int hh = c.digits(2);
    c.expect(':');
    const int mm = c.digits(2);
    int ss = 0;
    std::int64_t frac = 0;
    if (c.accept(':')) {
      ss = c.digits(2);
      if (c.accept('.')) {
        int n = 0;
        while (c.peek() >= '0' && c.peek() <= '9') {
          int digit = c.digits(1);
          if (n < 6) frac = frac * 10 + digit;
          ++n;
        }
        if (n == 0) c.fail();
        for (; n < 6; ++n) frac *= 10;
      }
    }
    if (hh > 23 || mm > 59 || ss > 60) c.fail();
    micros = ((static_cast<std::int64_t>(hh) * 60 + mm) * 60 + ss) * 1'000'000 + frac;

    if (c.accept('Z')) {
    } else if (c.peek() == '+' || c.peek() == '-') {
      const bool negative = c.peek() == '-';
      c.accept(c.peek());
      const int oh = c.digits(2);
      c.accept(':');
      const int om = c.digits(2);
      if (oh > 23 || om > 59) c.fail();
      const std::int64_t offset = (static_cast<std::int64_t>(oh) * 60 + om) * 60 * 1'000'000;
      micros += negative ? offset : -offset;
    }
  }
  if (!c.done()) c.fail();

  const std::int64_t days = sys_days{ymd}.time_since_epoch().count();
  return Timestamp{days * 86'400'000'000LL + micros};
}

}  // namespace cxrl::corpus
