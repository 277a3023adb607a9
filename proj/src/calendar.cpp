#include "deconf/calendar.hpp"

#include <cstdio>

#include "deconf/error.hpp"

namespace deconf {

namespace {

// Civil-calendar conversion (days since 1970-01-01).
int days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return era * 146097 + static_cast<int>(doe) - 719468;
}

void civil_from_days(int z, int& y, int& m, int& d) {
  z += 719468;
  const int era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<int>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y += m <= 2;
}

int days_in_month(int y, int m) {
  static const int table[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (m == 2) {
    const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
    return leap ? 29 : 28;
  }
  return table[m - 1];
}

}  // namespace

Date parse_date(const std::string& text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-')
    throw DataError("malformed date '" + text + "', expected YYYY-MM-DD");
  for (int i : {0, 1, 2, 3, 5, 6, 8, 9})
    if (text[static_cast<std::size_t>(i)] < '0' || text[static_cast<std::size_t>(i)] > '9')
      throw DataError("malformed date '" + text + "', expected YYYY-MM-DD");
  const int y = std::stoi(text.substr(0, 4));
  const int m = std::stoi(text.substr(5, 2));
  const int d = std::stoi(text.substr(8, 2));
  if (m < 1 || m > 12 || d < 1 || d > days_in_month(y, m))
    throw DataError("invalid calendar date '" + text + "'");
  return Date{days_from_civil(y, m, d)};
}

std::string format_date(Date date) {
  int y, m, d;
  civil_from_days(date.serial, y, m, d);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
  return buf;
}

PeriodCalendar::PeriodCalendar(Date start, int period_days, int period_count)
    : start_(start), period_days_(period_days), period_count_(period_count) {
  if (period_days <= 0) throw DataError("period length must be positive");
  if (period_count < 0) throw DataError("period count must be nonnegative");
}

PeriodCalendar PeriodCalendar::covering(Date start, Date end, int period_days) {
  if (end < start) throw DataError("calendar end before start");
  const int days = end - start + 1;
  return PeriodCalendar(start, period_days, days / period_days);
}

PeriodRange PeriodCalendar::range(int t) const {
  return PeriodRange{start_ + t * period_days_, start_ + (t + 1) * period_days_ - 1};
}

int PeriodCalendar::period_of(Date d) const {
  const int offset = d - start_;
  if (offset < 0) return -1;
  const int t = offset / period_days_;
  return t < period_count_ ? t : -1;
}

}  // namespace deconf
