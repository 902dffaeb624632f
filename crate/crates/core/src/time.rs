//! UTC instants as Unix seconds, calendar helpers and the leap-second table.
//!
//! Every instant in the crate is an `f64` count of UTC Unix seconds (leap
//! seconds not counted, fractional part kept). Physical elapsed time between
//! two instants is recovered with [`elapsed_si_seconds`].

/// Seconds per civil day.
pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Unix time of the J2000.0 reference instant, 2000-01-01T12:00:00.
pub const J2000_UNIX: f64 = 946_728_000.0;

/// (Unix time at which the offset took effect, TAI − UTC in seconds).
const LEAP_SECONDS: &[(i64, i32)] = &[
    (63_072_000, 10),    // 1972-01-01
    (78_796_800, 11),    // 1972-07-01
    (94_694_400, 12),    // 1973-01-01
    (126_230_400, 13),   // 1974-01-01
    (157_766_400, 14),   // 1975-01-01
    (189_302_400, 15),   // 1976-01-01
    (220_924_800, 16),   // 1977-01-01
    (252_460_800, 17),   // 1978-01-01
    (283_996_800, 18),   // 1979-01-01
    (315_532_800, 19),   // 1980-01-01
    (362_793_600, 20),   // 1981-07-01
    (394_329_600, 21),   // 1982-07-01
    (425_865_600, 22),   // 1983-07-01
    (489_024_000, 23),   // 1985-07-01
    (567_993_600, 24),   // 1988-01-01
    (631_152_000, 25),   // 1990-01-01
    (662_688_000, 26),   // 1991-01-01
    (709_948_800, 27),   // 1992-07-01
    (741_484_800, 28),   // 1993-07-01
    (773_020_800, 29),   // 1994-07-01
    (820_454_400, 30),   // 1996-01-01
    (867_715_200, 31),   // 1997-07-01
    (915_148_800, 32),   // 1999-01-01
    (1_136_073_600, 33), // 2006-01-01
    (1_230_768_000, 34), // 2009-01-01
    (1_341_100_800, 35), // 2012-07-01
    (1_435_708_800, 36), // 2015-07-01
    (1_483_228_800, 37), // 2017-01-01
];

/// TAI − UTC at the given instant. Zero before 1972.
pub fn tai_minus_utc(unix_s: f64) -> i32 {
    let t = unix_s.floor() as i64;
    match LEAP_SECONDS.binary_search_by(|(start, _)| start.cmp(&t)) {
        Ok(i) => LEAP_SECONDS[i].1,
        Err(0) => 0,
        Err(i) => LEAP_SECONDS[i - 1].1,
    }
}

/// SI seconds elapsed from `from` to `to`, counting inserted leap seconds.
pub fn elapsed_si_seconds(from: f64, to: f64) -> f64 {
    (to - from) + f64::from(tai_minus_utc(to) - tai_minus_utc(from))
}

/// Days since 1970-01-01 for a proleptic Gregorian date.
pub fn days_from_civil(year: i32, month: u32, day: u32) -> i64 {
    let y = i64::from(year) - i64::from(month <= 2);
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400;
    let m = i64::from(month);
    let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + i64::from(day) - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

/// Inverse of [`days_from_civil`]: (year, month, day).
pub fn civil_from_days(days: i64) -> (i32, u32, u32) {
    let z = days + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    ((y + i64::from(m <= 2)) as i32, m, d)
}

/// Unix seconds of a (year, fractional day-of-year) pair, day 1.0 = Jan 1 00:00.
pub fn unix_from_year_day(year: i32, day_of_year: f64) -> f64 {
    let jan1 = days_from_civil(year, 1, 1) as f64 * SECONDS_PER_DAY;
    jan1 + (day_of_year - 1.0) * SECONDS_PER_DAY
}

/// Unix seconds of a calendar date and time of day.
pub fn unix_from_calendar(year: i32, month: u32, day: u32, hour: u32, minute: u32, second: f64) -> f64 {
    days_from_civil(year, month, day) as f64 * SECONDS_PER_DAY
        + f64::from(hour) * 3600.0
        + f64::from(minute) * 60.0
        + second
}

/// Whether `year` is a Gregorian leap year.
pub fn is_leap_year(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}
