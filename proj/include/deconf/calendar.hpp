#pragma once

#include <string>
#include <vector>

namespace deconf {

/// Calendar date as a serial day number (days since 1970-01-01, civil).
struct Date {
  int serial = 0;

  auto operator<=>(const Date&) const = default;
  Date operator+(int days) const { return Date{serial + days}; }
  Date operator-(int days) const { return Date{serial - days}; }
  int operator-(Date other) const { return serial - other.serial; }
};

/// Parses strict ISO-8601 YYYY-MM-DD. Throws DataError on malformed input.
Date parse_date(const std::string& text);
std::string format_date(Date d);

struct PeriodRange {
  Date start;
  Date end;  // inclusive
  int days() const { return end - start + 1; }
};

/// Consecutive fixed-length periods covering [start, start + count*length).
class PeriodCalendar {
 public:
  PeriodCalendar() = default;
  PeriodCalendar(Date start, int period_days, int period_count);

  /// Largest whole number of periods fitting in [start, end].
  static PeriodCalendar covering(Date start, Date end, int period_days);

  int periods() const { return period_count_; }
  int period_days() const { return period_days_; }
  Date start() const { return start_; }
  Date end() const { return start_ + period_days_ * period_count_ - 1; }
  PeriodRange range(int t) const;

  /// Period index of a date, or -1 when outside the window.
  int period_of(Date d) const;

 private:
  Date start_{};
  int period_days_ = 15;
  int period_count_ = 0;
};

}  // namespace deconf
