use std::sync::LazyLock;

use regex::Regex;

const NUMBER: &str = r"(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?|\.\d+";

static ANSWER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"(-)?({NUMBER})(?:\s*(?:-|–|—|to)\s*({NUMBER}))?")).expect("valid pattern")
});

/// Extracts a numeric prediction from a free-text reply.
///
/// Looks for the first number after the last occurrence of `marker`, and
/// falls back to the first number anywhere in `raw`. Thousands separators are
/// stripped and a range (`20-30`, `20 to 30`) yields its midpoint. Returns
/// `None` when the reply holds no number.
pub fn parse_response(raw: &str, marker: &str) -> Option<f64> {
    let after_marker = (!marker.is_empty())
        .then(|| raw.rfind(marker))
        .flatten()
        .and_then(|pos| first_number(&raw[pos + marker.len()..]));
    after_marker.or_else(|| first_number(raw))
}

fn first_number(text: &str) -> Option<f64> {
    let caps = ANSWER.captures(text)?;
    let value = |i: usize| {
        caps.get(i)
            .and_then(|m| m.as_str().replace(',', "").parse::<f64>().ok())
    };
    let low = value(2)?;
    let low = if caps.get(1).is_some() { -low } else { low };
    Some(match value(3) {
        Some(high) => 0.5 * (low + high),
        None => low,
    })
}
